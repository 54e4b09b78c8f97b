"""Method-of-reflections correction of the superposed singularity field.

Particles respond to the ambient strain at their centers with an induced
stresslet (leading rigid multipole, coefficient alpha * r^3); each sweep
cancels the current ambient strain and produces a new, smaller residual
sourced by the just-added increments.  The contraction ratio of the
residual history is the dilute-regime diagnostic reported alongside
phi_n log n.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import backend
from .kernels import (
    FIELD_NORM,
    contract_field,
    l_n_app_eval,
    singularity_matrices,
)
from .tensors import ResistanceParams, SymTraceless3, sym_traceless_to_matrix_batch

SPHERE_ALPHA = 20.0 * np.pi / 3.0


class AssumptionViolation(ValueError):
    """A configured particle arrangement violates a standing assumption."""

    def __init__(self, assumption, message, detail=None):
        super().__init__(f"{assumption}: {message}")
        self.assumption = assumption
        self.detail = detail


@dataclass(frozen=True)
class ParticleConfiguration:
    centers: np.ndarray  # (n, 3)
    r: float
    c_sep: float
    box: float | None = None
    d_min: float = field(init=False, default=np.inf)
    closest_pair: tuple = field(init=False, default=(0, 0))

    def __post_init__(self):
        centers = np.asarray(self.centers, dtype=float)
        object.__setattr__(self, "centers", centers)
        if centers.ndim != 2 or centers.shape[1] != 3 or centers.shape[0] < 1:
            raise ValueError("centers must be an (n, 3) array")
        if self.r <= 0 or self.c_sep <= 0:
            raise ValueError("particle radius and separation constant must be positive")
        d_min, pair = np.inf, (0, 0)
        n = centers.shape[0]
        if n > 1:
            from scipy.spatial.distance import pdist, squareform

            d = squareform(pdist(centers))
            np.fill_diagonal(d, np.inf)
            flat = np.argmin(d)
            pair = np.unravel_index(flat, d.shape)
            d_min = float(d[pair])
        object.__setattr__(self, "d_min", d_min)
        object.__setattr__(self, "closest_pair", (int(pair[0]), int(pair[1])))

    @property
    def n(self):
        return self.centers.shape[0]

    @property
    def phi_n(self):
        return self.n * self.r**3

    @property
    def phi_n_log_n(self):
        return self.phi_n * np.log(self.n) if self.n > 1 else 0.0

    def diagnostics(self):
        return {
            "n": self.n,
            "r": self.r,
            "phi_n": self.phi_n,
            "phi_n_log_n": float(self.phi_n_log_n),
            "d_min": float(self.d_min),
            "c_sep": self.c_sep,
            "box": self.box,
            "max_center_norm": float(np.linalg.norm(self.centers, axis=1).max()),
        }


DILUTE_WARN_THRESHOLD = 0.5


def build_config(centers, r, c_sep, box=None, warn=None):
    """Validated particle configuration; raises naming the failed assumption.

    Checks the minimum-distance scaling d_min >= c_sep * n^(-1/3), the
    pairwise clearance d_min >= (2 + c_sep) r, and (when a box bound is
    given) max |x_i| <= box.  The dilution diagnostic phi_n log n is
    reported through the optional warn callback when it exceeds the
    threshold above.
    """
    cfg = ParticleConfiguration(centers, float(r), float(c_sep), None if box is None else float(box))
    n = cfg.n
    if n > 1:
        slack = 1.0 - 1e-9  # float-tolerant comparisons for exactly-critical lattices
        if cfg.d_min < slack * c_sep * n ** (-1.0 / 3.0):
            raise AssumptionViolation(
                "H2",
                f"minimum distance {cfg.d_min:.3e} below {c_sep:.3g} n^(-1/3) "
                f"(pair {cfg.closest_pair})",
                detail=cfg.closest_pair,
            )
        if cfg.d_min < slack * (2.0 + c_sep) * r:
            raise AssumptionViolation(
                "separation",
                f"pair {cfg.closest_pair} clearance below {c_sep:.3g} r",
                detail=cfg.closest_pair,
            )
    if box is not None:
        norms = np.linalg.norm(cfg.centers, axis=1)
        worst = int(np.argmax(norms))
        if norms[worst] > box:
            raise AssumptionViolation(
                "H3", f"particle {worst} at |x|={norms[worst]:.3g} outside box {box:.3g}",
                detail=worst,
            )
    if warn is not None and cfg.phi_n_log_n > DILUTE_WARN_THRESHOLD:
        warn(f"phi_n log n = {cfg.phi_n_log_n:.3g} exceeds the dilute threshold")
    return cfg


def _pair_strain(centers, mats):
    """Symmetric-traceless ambient strain (n, 5) with field normalization."""
    return FIELD_NORM * np.asarray(backend.pair_strain(centers, mats))


def ambient_strain(config, orientations, torques, params: ResistanceParams, i) -> SymTraceless3:
    """Strain of the superposed base field of all particles j != i at x_i."""
    mats = singularity_matrices(orientations, torques, params)
    return SymTraceless3(_pair_strain(config.centers, mats)[i])


@dataclass
class ReflectionState:
    """One sweep state: induced stresslets, residual strains, and history."""

    config: ParticleConfiguration
    orientations: np.ndarray
    torques: np.ndarray
    params: ResistanceParams
    alpha: float
    k: int
    stresslets: np.ndarray  # (n, 5) accumulated induced stresslets
    residual: np.ndarray  # (n, 5) current ambient strain to cancel
    history: list  # total residual norm per iteration

    @property
    def residual_norms(self):
        return np.linalg.norm(
            sym_traceless_to_matrix_batch(self.residual), axis=(1, 2)
        )

    @property
    def total_residual(self):
        return float(self.residual_norms.sum())

    def corrected_field(self, probes):
        """Base superposed field plus all induced stresslet fields at probes."""
        probes = np.asarray(probes, dtype=float)
        single = probes.ndim == 1
        pts = probes[None, :] if single else probes
        base = l_n_app_eval(
            self.config.centers, self.orientations, self.torques, self.params, pts
        )
        smats = sym_traceless_to_matrix_batch(self.stresslets)
        dx = pts[:, None, :] - self.config.centers[None, :, :]
        extra = contract_field(np.broadcast_to(smats, dx.shape[:2] + (3, 3)), dx).sum(axis=1)
        out = base + extra
        return out[0] if single else out


def initial_state(config, orientations, torques, params, alpha=SPHERE_ALPHA):
    mats = singularity_matrices(orientations, torques, params)
    residual = _pair_strain(config.centers, mats)
    state = ReflectionState(
        config=config,
        orientations=np.asarray(orientations, dtype=float),
        torques=np.asarray(torques, dtype=float),
        params=params,
        alpha=float(alpha),
        k=0,
        stresslets=np.zeros((config.n, 5)),
        residual=residual,
        history=[],
    )
    state.history.append(state.total_residual)
    return state


def reflect_once(state: ReflectionState) -> ReflectionState:
    """Cancel the current ambient strain with stresslet increments.

    Each particle picks up dS_i = alpha r^3 E_i; the next residual is the
    strain the increments alone induce at the other centers.
    """
    ds = state.alpha * state.config.r**3 * state.residual
    new_residual = _pair_strain(state.config.centers, sym_traceless_to_matrix_batch(ds))
    new = ReflectionState(
        config=state.config,
        orientations=state.orientations,
        torques=state.torques,
        params=state.params,
        alpha=state.alpha,
        k=state.k + 1,
        stresslets=state.stresslets + ds,
        residual=new_residual,
        history=list(state.history),
    )
    new.history.append(new.total_residual)
    return new


@dataclass
class MorResult:
    state: ReflectionState
    converged: bool
    rho: float
    diverging: bool

    @property
    def history(self):
        return self.state.history

    def diagnostics(self):
        return {
            "iterations": self.state.k,
            "converged": self.converged,
            "rho": self.rho,
            "diverging": self.diverging,
            "residual_history": [float(h) for h in self.state.history],
            "phi_n_log_n": float(self.state.config.phi_n_log_n),
            "alpha": self.state.alpha,
        }


def mor_solve(config, orientations, torques, params, tol=1e-8, k_max=50, alpha=SPHERE_ALPHA):
    """Iterate reflections until the residual drops below tol relative.

    Reports the empirical contraction ratio rho (geometric mean of
    successive residual ratios) and flags rho >= 1; a non-converged state
    is returned with its full history rather than raised.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    state = initial_state(config, orientations, torques, params, alpha)
    initial = state.history[0]
    if initial == 0.0 or config.n == 1:
        return MorResult(state, True, 0.0, False)
    while state.k < k_max and state.history[-1] > tol * initial:
        state = reflect_once(state)
        if state.history[-1] > 1e6 * initial:
            break  # clearly diverging; keep the history for the report
    ratios = [
        b / a for a, b in zip(state.history, state.history[1:]) if a > 0
    ]
    rho = float(np.exp(np.mean(np.log(ratios)))) if ratios else 0.0
    converged = state.history[-1] <= tol * initial
    return MorResult(state, converged, rho, rho >= 1.0)


def k1_orientation_grad(config, orientations, torques, params, x, j, tangent, alpha=SPHERE_ALPHA):
    """Derivative of the one-sweep corrected field along orientation j.

    Chain rule through the stresslet coupling: the base field moves through
    S(xi_j), and every other particle's first-sweep increment
    dS_i = alpha r^3 E_i moves through E_i's dependence on particle j's
    forcing matrix.
    """
    from .kernels import contract_raw_gradient, l_n_app_orientation_grad

    orientations = np.asarray(orientations, dtype=float)
    torques = np.asarray(torques, dtype=float)
    x = np.asarray(x, dtype=float)
    tangent = np.asarray(tangent, dtype=float)
    base = l_n_app_orientation_grad(config.centers, orientations, torques, params, x, j, tangent)
    xi, t = orientations[j], torques[j]
    a = np.outer(np.cross(t, tangent), xi) + np.outer(np.cross(t, xi), tangent)
    dmat_j = 0.5 * (params.gamma_E / params.gamma_rot) * (a + a.T)
    out = base
    scale = alpha * config.r**3
    for i in range(config.n):
        if i == j:
            continue
        grad = FIELD_NORM * contract_raw_gradient(dmat_j, config.centers[i] - config.centers[j])
        de = 0.5 * (grad + grad.T)
        de -= np.trace(de) / 3.0 * np.eye(3)
        out = out + contract_field(scale * de, x - config.centers[i])
    return out


def save_history(path, result: MorResult):
    """Residual history as CSV (iteration, total_residual)."""
    with open(path, "w") as fh:
        fh.write("iteration,total_residual\n")
        for k, h in enumerate(result.state.history):
            fh.write(f"{k},{float(h)!r}\n")


def lattice_centers(n, spacing=None, jitter=0.0, seed=0):
    """Cubic-lattice centers, optionally jittered, n rounded up to a cube."""
    m = int(np.ceil(n ** (1.0 / 3.0) - 1e-9))
    spacing = spacing if spacing is not None else 1.0 / m
    ax = np.arange(m) * spacing
    gx, gy, gz = np.meshgrid(ax, ax, ax, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)[:n]
    if jitter:
        rng = np.random.default_rng(seed)
        pts = pts + rng.uniform(-jitter, jitter, size=pts.shape) * spacing
    return pts - pts.mean(axis=0)
