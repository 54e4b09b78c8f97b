"""Spectral solver on the unit sphere for the orientation density.

Solves the drift-diffusion equation
    d_t f = lap_S2 f - div_S2(P_{xi^perp} h(t) f)
in a real spherical-harmonic basis: diffusion exactly through the
Laplace-Beltrami eigenvalues -l(l+1), the drift term in weak form
    <Y_lm, -div(P h f)> = <grad_S2 Y_lm . P_{xi^perp} h, f>
evaluated by Gauss-Legendre x uniform-azimuth quadrature.  The stationary
small-forcing problem is solved by a dense eigendecomposition of the
assembled operator, with runtime checks that the kernel is numerically
one-dimensional and the kernel density has a sign.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import eval_legendre, sph_harm_y

from .kernels import StressField
from .sde import TorqueFieldSpec
from .tensors import SymTraceless3

MASS_TOL = 1e-10
NEGATIVITY_TOL = 1e-8


class BlowUpError(RuntimeError):
    """Raised when the coefficient vector stops being finite or explodes."""


def n_coeffs(l_max):
    return (l_max + 1) ** 2


def coeff_index(l, m):
    """Flat index of the (l, m) real-harmonic coefficient, |m| <= l."""
    if abs(m) > l:
        raise ValueError("need |m| <= l")
    return l * l + l + m


def coeff_degrees(l_max):
    """Array of degrees l per flat coefficient index."""
    ls = np.concatenate([np.full(2 * l + 1, l) for l in range(l_max + 1)])
    return ls


class SphereGrid:
    """Product quadrature grid: Gauss-Legendre in cos(theta), uniform azimuth.

    Exact for polynomials in xi of total degree <= 2*n_theta - 1 (and
    azimuthal order < n_phi); the default for a given l_max integrates
    products of two degree-l_max harmonics times a linear factor exactly.
    """

    def __init__(self, n_theta, n_phi):
        if n_theta < 1 or n_phi < 1:
            raise ValueError("grid sizes must be positive")
        x, w = np.polynomial.legendre.leggauss(n_theta)
        theta = np.arccos(x[::-1])
        wt = w[::-1]
        phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
        tt, pp = np.meshgrid(theta, phi, indexing="ij")
        self.n_theta, self.n_phi = n_theta, n_phi
        self.theta = tt.ravel()
        self.phi = pp.ravel()
        self.weights = np.repeat(wt, n_phi) * (2.0 * np.pi / n_phi)
        st = np.sin(self.theta)
        self.xyz = np.stack(
            [st * np.cos(self.phi), st * np.sin(self.phi), np.cos(self.theta)], axis=1
        )

    @classmethod
    def for_degree(cls, l_max):
        return cls(l_max + 3, 2 * l_max + 8)

    @property
    def size(self):
        return self.theta.size

    def integrate(self, values):
        return np.asarray(values) @ self.weights


def _real_basis(l_max, grid: SphereGrid, with_grad=False):
    """Orthonormal real harmonics (and tangential gradients) on grid nodes.

    Returns y (k, n_coeffs) and, if requested, gy (k, n_coeffs, 3) with the
    ambient tangential gradient grad_S2 Y at each node.
    """
    k = grid.size
    nc = n_coeffs(l_max)
    y = np.empty((k, nc))
    gy = np.empty((k, nc, 3)) if with_grad else None
    if with_grad:
        st = np.sin(grid.theta)
        ct, cp, sp = np.cos(grid.theta), np.cos(grid.phi), np.sin(grid.phi)
        e_theta = np.stack([ct * cp, ct * sp, -st], axis=1)
        e_phi = np.stack([-sp, cp, np.zeros(k)], axis=1)
        inv_st = 1.0 / st  # interior Gauss nodes, never at the poles
    for l in range(l_max + 1):
        for m in range(l + 1):
            if with_grad:
                val, jac = sph_harm_y(l, m, grid.theta, grid.phi, diff_n=1)
                dth, dph = jac[:, 0], jac[:, 1]
            else:
                val = sph_harm_y(l, m, grid.theta, grid.phi)
            sign = -1.0 if m % 2 else 1.0
            if m == 0:
                y[:, coeff_index(l, 0)] = val.real
                if with_grad:
                    gy[:, coeff_index(l, 0)] = e_theta * dth.real[:, None]
            else:
                c = np.sqrt(2.0) * sign
                y[:, coeff_index(l, m)] = c * val.real
                y[:, coeff_index(l, -m)] = c * val.imag
                if with_grad:
                    gp = (inv_st * dph.real)[:, None] * e_phi
                    gy[:, coeff_index(l, m)] = c * (e_theta * dth.real[:, None] + gp)
                    gp = (inv_st * dph.imag)[:, None] * e_phi
                    gy[:, coeff_index(l, -m)] = c * (e_theta * dth.imag[:, None] + gp)
    return (y, gy) if with_grad else y


class Basis:
    """Cached real-harmonic synthesis/analysis and drift operators at one l_max."""

    _cache: dict = {}

    def __init__(self, l_max, grid=None):
        if l_max < 0:
            raise ValueError("l_max must be nonnegative")
        self.l_max = l_max
        self.grid = grid or SphereGrid.for_degree(l_max)
        self.y, self.grad_y = _real_basis(l_max, self.grid, with_grad=True)
        self.degrees = coeff_degrees(l_max)
        self.lap = -self.degrees * (self.degrees + 1.0)
        # drift operator is linear in h: A(h) = sum_c h_c * unit_ops[c], where
        # A_{ab} = int grad Y_a . (e_c - (xi.e_c) xi) Y_b
        wy = self.y * self.grid.weights[:, None]
        self.unit_ops = []
        for c in range(3):
            ph = np.zeros((self.grid.size, 3))
            ph[:, c] = 1.0
            ph -= self.grid.xyz[:, c][:, None] * self.grid.xyz
            d = np.einsum("kac,kc->ka", self.grad_y, ph)
            self.unit_ops.append(d.T @ wy)

    @classmethod
    def get(cls, l_max):
        if l_max not in cls._cache:
            cls._cache[l_max] = cls(l_max)
        return cls._cache[l_max]

    def drift_matrix(self, h):
        h = np.asarray(h, dtype=float)
        return h[0] * self.unit_ops[0] + h[1] * self.unit_ops[1] + h[2] * self.unit_ops[2]

    def analyze(self, values):
        return self.y.T @ (self.grid.weights * np.asarray(values, dtype=float))

    def synthesize(self, coeffs):
        return self.y @ np.asarray(coeffs, dtype=float)


@dataclass
class SphericalDensity:
    """Real spherical-harmonic expansion of a density on S^2."""

    coeffs: np.ndarray
    l_max: int

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (n_coeffs(self.l_max),):
            raise ValueError("coefficient vector does not match l_max")

    @property
    def mass(self):
        return float(np.sqrt(4.0 * np.pi) * self.coeffs[0])

    @classmethod
    def uniform(cls, mass, l_max):
        c = np.zeros(n_coeffs(l_max))
        c[0] = mass / np.sqrt(4.0 * np.pi)
        return cls(c, l_max)

    @classmethod
    def from_function(cls, fn, l_max):
        """Project a pointwise density fn(xyz array (k,3)) -> (k,) onto the basis."""
        basis = Basis.get(l_max)
        return cls(basis.analyze(fn(basis.grid.xyz)), l_max)

    def evaluate(self, points=None):
        """Density values on the basis grid (or at given unit points)."""
        if points is None:
            return Basis.get(self.l_max).synthesize(self.coeffs)
        return basis_at_points(points, self.l_max) @ self.coeffs

    def negativity(self):
        """Most negative grid value (0 when nonnegative everywhere sampled)."""
        return float(min(0.0, self.evaluate().min()))


def basis_at_points(points, l_max):
    """Real-harmonic basis matrix (k, n_coeffs) at arbitrary unit points."""
    points = np.asarray(points, dtype=float)

    class _P:
        pass

    g = _P()
    g.theta = np.arccos(np.clip(points[:, 2], -1.0, 1.0))
    g.phi = np.arctan2(points[:, 1], points[:, 0])
    g.size = points.shape[0]
    return _real_basis(l_max, g)


def point_density(xi, l_max):
    """Band-limited delta at xi: coefficients a_lm = Y_lm(xi).

    Low-order moments of the truncated expansion match the point mass
    exactly; the grid reconstruction oscillates (expected for a delta).
    """
    xi = np.asarray(xi, dtype=float)
    xi = xi / np.linalg.norm(xi)
    return SphericalDensity(basis_at_points(xi[None, :], l_max)[0], l_max)


def cap_density(cos_min, l_max):
    """Uniform density on the polar cap xi_3 >= cos_min, unit mass.

    Coefficients are analytic: only m = 0 survives the azimuthal average,
    and int_c^1 P_l du = (P_{l-1}(c) - P_{l+1}(c)) / (2l + 1).
    """
    c = float(cos_min)
    if not -1.0 < c < 1.0:
        raise ValueError("need -1 < cos_min < 1")
    coeffs = np.zeros(n_coeffs(l_max))
    coeffs[0] = 1.0 / np.sqrt(4.0 * np.pi)
    for l in range(1, l_max + 1):
        nl = np.sqrt((2 * l + 1) / (4.0 * np.pi))
        integral = (eval_legendre(l - 1, c) - eval_legendre(l + 1, c)) / (2 * l + 1)
        coeffs[coeff_index(l, 0)] = nl * integral / (1.0 - c)
    return SphericalDensity(coeffs, l_max)


def vmf_density(beta, mu, l_max):
    """von Mises-Fisher density exp(beta xi.mu) / Z, Z = 4 pi sinh(beta)/beta."""
    mu = np.asarray(mu, dtype=float)
    mu = mu / np.linalg.norm(mu)
    z = 4.0 * np.pi * np.sinh(beta) / beta
    return SphericalDensity.from_function(lambda p: np.exp(beta * (p @ mu)) / z, l_max)


def default_dt(h_spec: TorqueFieldSpec, t_end):
    """Stability-guarded default step: min(1e-3, 0.1/||h||_inf) over [0, t_end]."""
    ts = np.linspace(0.0, t_end, 33)
    hmax = max((np.linalg.norm(h_spec(t)) for t in ts), default=0.0)
    dt = 1e-3 if hmax == 0.0 else min(1e-3, 0.1 / hmax)
    return dt


def evolve(f0: SphericalDensity, h_spec, t_end, dt=None, store=False):
    """Integrate the drift-diffusion equation from f0 over [0, t_end].

    Diffusion is applied exactly through the integrating factor
    exp(-l(l+1)t); the drift is advanced by an explicit midpoint rule in
    the diffusion-filtered variable (global order 2).  Returns the final
    SphericalDensity, or (times, trajectory) when store is set.
    """
    h_spec = h_spec or TorqueFieldSpec.zero()
    if t_end < 0:
        raise ValueError("t_end must be nonnegative")
    if dt is None:
        dt = default_dt(h_spec, t_end)
    if dt <= 0:
        raise ValueError("dt must be positive")
    basis = Basis.get(f0.l_max)
    m = max(1, int(round(t_end / dt))) if t_end > 0 else 0
    dt = t_end / m if m else dt
    c = f0.coeffs.copy()
    mass0 = c[0]
    e_half = np.exp(basis.lap * dt / 2.0)
    out = [c.copy()] if store else None
    static = h_spec.kind != "time_varying"
    if static:
        a_mid = basis.drift_matrix(h_spec(0.0))
    for k in range(m):
        t = k * dt
        if not static:
            a_mid = basis.drift_matrix(h_spec(t + dt / 2.0))
        # Strang: half diffusion, midpoint drift at t + dt/2, half diffusion
        c = e_half * c
        c_star = c + (dt / 2.0) * (a_mid @ c)
        c = c + dt * (a_mid @ c_star)
        c = e_half * c
        if not np.all(np.isfinite(c)) or np.abs(c).max() > 1e12:
            raise BlowUpError(
                f"coefficient blow-up at t={t + dt:.6g} (dt={dt:.3g}, l_max={f0.l_max})"
            )
        if store:
            out.append(c.copy())
    if abs(c[0] - mass0) > MASS_TOL / np.sqrt(4.0 * np.pi):
        raise BlowUpError("mass conservation violated during evolution")
    if store:
        times = np.arange(m + 1) * dt
        return times, [SphericalDensity(ck, f0.l_max) for ck in out]
    return SphericalDensity(c, f0.l_max)


class DegenerateKernelError(RuntimeError):
    """Stationary operator kernel is not numerically one-dimensional."""


def stationary_solve(h_spec, mass, l_max, gap_tol=1e-8):
    """Kernel of L f = lap f - div(P h f) with the prescribed total mass.

    Assembles the dense operator in the harmonic basis, takes the
    smallest-magnitude eigenvector, and checks the theorem-backed
    properties: the kernel is simple (spectral gap > 10x tolerance) and
    the density has a sign on the quadrature grid.
    """
    h_spec = h_spec or TorqueFieldSpec.zero()
    if h_spec.kind == "time_varying":
        raise ValueError("stationary problem needs a time-independent torque field")
    basis = Basis.get(l_max)
    op = np.diag(basis.lap) + basis.drift_matrix(h_spec(0.0))
    vals, vecs = np.linalg.eig(op)
    order = np.argsort(np.abs(vals))
    lam0, lam1 = vals[order[0]], vals[order[1]]
    if not (abs(lam0) <= gap_tol and abs(lam1) > 10.0 * gap_tol):
        raise DegenerateKernelError(
            f"kernel not simple: |lambda_0|={abs(lam0):.3e}, |lambda_1|={abs(lam1):.3e}"
        )
    v = vecs[:, order[0]]
    if np.abs(v.imag).max() > 1e-10 * np.abs(v.real).max():
        raise DegenerateKernelError("kernel eigenvector is not real")
    v = v.real
    grid_vals = basis.synthesize(v)
    if grid_vals.min() * grid_vals.max() <= 0.0:
        raise DegenerateKernelError("kernel density changes sign on the grid")
    v = v * np.sign(grid_vals.mean())
    v *= mass / (np.sqrt(4.0 * np.pi) * v[0])
    return SphericalDensity(v, l_max)


def stress_moment(f: SphericalDensity, gamma_E) -> SymTraceless3:
    """Deviatoric stress sigma = gamma_E int (Id - 3 xi (x) xi) f dxi."""
    basis = Basis.get(f.l_max)
    vals = basis.synthesize(f.coeffs) * basis.grid.weights
    xyz = basis.grid.xyz
    second = np.einsum("k,ka,kb->ab", vals, xyz, xyz)
    sig = gamma_E * (vals.sum() * np.eye(3) - 3.0 * second)
    sig = 0.5 * (sig + sig.T)
    sig -= np.trace(sig) / 3.0 * np.eye(3)
    return SymTraceless3.from_matrix(sig, tol=None)


class NodeSolveError(RuntimeError):
    def __init__(self, node, cause):
        super().__init__(f"density solve failed at node {node}: {cause}")
        self.node = node
        self.cause = cause


def density_field(nodes, spacing, f0_list, h_spec, mode, gamma_E, t_end=10.0, dt=None):
    """Per-node orientation densities and the induced deviatoric stress field.

    nodes: (k, 3) grid positions with uniform spacing; f0_list: one
    SphericalDensity per node.  mode "instationary" evolves each node's
    density to t_end; mode "stationary" keeps only each node's mass and
    solves the stationary problem.  Returns (densities, StressField).
    """
    nodes = np.asarray(nodes, dtype=float)
    if len(f0_list) != nodes.shape[0]:
        raise ValueError("need one initial density per node")
    if mode not in ("instationary", "stationary"):
        raise ValueError(f"unknown mode {mode!r}")
    densities = []
    for i, f0 in enumerate(f0_list):
        try:
            if mode == "instationary":
                densities.append(evolve(f0, h_spec, t_end, dt))
            else:
                densities.append(stationary_solve(h_spec, f0.mass, f0.l_max))
        except Exception as exc:  # noqa: BLE001 - re-raised with node identity
            raise NodeSolveError(i, exc) from exc
    values = np.stack([stress_moment(f, gamma_E).c for f in densities])
    return densities, StressField(nodes, values, spacing)


def save_coeffs(path, densities, node_ids=None):
    """CSV serialization: node id, l, m, a_lm per row."""
    if node_ids is None:
        node_ids = range(len(densities))
    with open(path, "w") as fh:
        fh.write("node,l,m,a_lm\n")
        for nid, f in zip(node_ids, densities):
            for l in range(f.l_max + 1):
                for m in range(-l, l + 1):
                    fh.write(f"{nid},{l},{m},{float(f.coeffs[coeff_index(l, m)])!r}\n")
