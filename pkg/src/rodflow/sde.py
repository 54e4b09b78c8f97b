"""Orientation dynamics on the unit sphere.

Integrates the Stratonovich SDE
    d xi = sqrt(2) xi x odB + P_{xi^perp} h(t) dt
(with 1/sqrt(phi) and 1/phi factors on noise and drift in the fast-diffusion
scaling) by a Heun predictor-corrector with per-step renormalization.  An
Euler-Maruyama scheme on the Ito form (drift -2 xi + P h) cross-validates the
Ito-Stratonovich conversion.  Brownian increments are recorded so that
adapted stochastic pairings can be evaluated a posteriori against the same
noise that drove the paths.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .tensors import UNIT_TOL, normalize

SCHEMES = ("heun_stratonovich", "euler_maruyama_ito")
SCALINGS = ("deborah_one", "small_deborah")


@dataclass(frozen=True)
class TorqueFieldSpec:
    """External torque field h(t), a polynomial in time with vector coefficients.

    kind "zero" has no coefficients, "constant_b" a single vector, and
    "time_varying" a list of vectors c_k with h(t) = sum_k c_k t^k.  The
    integrator applies the tangential projection.
    """

    kind: str = "zero"
    coefficients: tuple = ()

    def __post_init__(self):
        if self.kind not in ("zero", "constant_b", "time_varying"):
            raise ValueError(f"unknown torque field kind {self.kind!r}")
        coeffs = tuple(tuple(float(x) for x in c) for c in self.coefficients)
        if any(len(c) != 3 or not all(np.isfinite(c)) for c in coeffs):
            raise ValueError("torque field coefficients must be finite 3-vectors")
        if self.kind == "zero" and coeffs:
            raise ValueError("zero field takes no coefficients")
        if self.kind == "constant_b" and len(coeffs) != 1:
            raise ValueError("constant field takes exactly one coefficient")
        object.__setattr__(self, "coefficients", coeffs)

    @classmethod
    def zero(cls):
        return cls("zero", ())

    @classmethod
    def constant(cls, b):
        return cls("constant_b", (tuple(b),))

    @classmethod
    def polynomial(cls, coeffs):
        return cls("time_varying", tuple(tuple(c) for c in coeffs))

    @classmethod
    def from_dict(cls, d):
        kind = d.get("kind", "zero")
        if kind == "zero":
            return cls.zero()
        if kind == "constant_b":
            return cls.constant(d["b"])
        if kind == "time_varying":
            return cls.polynomial(d["coefficients"])
        raise ValueError(f"unknown torque field kind {kind!r}")

    def to_dict(self):
        if self.kind == "zero":
            return {"kind": "zero"}
        if self.kind == "constant_b":
            return {"kind": "constant_b", "b": list(self.coefficients[0])}
        return {"kind": "time_varying", "coefficients": [list(c) for c in self.coefficients]}

    @property
    def poly(self):
        """Coefficient array of shape (k, 3)."""
        return np.asarray(self.coefficients, dtype=float).reshape(-1, 3)

    def __call__(self, t):
        if not self.coefficients:
            return np.zeros(3)
        p = self.poly
        return (t ** np.arange(p.shape[0])) @ p


@dataclass(frozen=True)
class SdeParams:
    dt: float
    t_end: float
    scaling: str = "deborah_one"
    phi_n: float | None = None
    scheme: str = "heun_stratonovich"
    seed: int = 0

    def __post_init__(self):
        if not (self.dt > 0):
            raise ValueError("dt must be positive")
        if not (self.t_end >= self.dt):
            raise ValueError("t_end must be at least dt")
        if self.scaling not in SCALINGS:
            raise ValueError(f"scaling must be one of {SCALINGS}")
        if self.scaling == "small_deborah":
            if self.phi_n is None or not (0.0 < self.phi_n < 1.0):
                raise ValueError("small_deborah scaling needs phi_n in (0, 1)")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError("seed must fit in 64 bits")

    @property
    def n_steps(self):
        return int(round(self.t_end / self.dt))

    @property
    def multipliers(self):
        """(drift_mult, noise_mult) for the chosen time scaling."""
        if self.scaling == "deborah_one":
            return 1.0, 1.0
        return 1.0 / self.phi_n, 1.0 / np.sqrt(self.phi_n)

    def to_dict(self):
        return {
            "dt": self.dt,
            "t_end": self.t_end,
            "scaling": self.scaling,
            "phi_n": self.phi_n,
            "scheme": self.scheme,
            "seed": int(self.seed),
        }


def particle_rng(seed, i):
    """Counter-based RNG stream for particle i, independent across particles."""
    return np.random.Generator(np.random.Philox(key=np.array([seed, i], dtype=np.uint64)))


def sample_initial(spec, rng):
    """Draw one initial orientation from a sampler spec dict."""
    kind = spec.get("kind")
    if kind == "uniform":
        v = rng.normal(size=3)
        return v / np.linalg.norm(v)
    if kind == "delta":
        return normalize(np.asarray(spec["xi"], dtype=float))
    if kind == "cap":
        # uniform on the polar cap xi_3 >= cos_min
        c = float(spec["cos_min"])
        w = rng.uniform(c, 1.0)
        phi = rng.uniform(0.0, 2.0 * np.pi)
        s = np.sqrt(max(0.0, 1.0 - w * w))
        return np.array([s * np.cos(phi), s * np.sin(phi), w])
    if kind == "von_mises":
        mu = normalize(np.asarray(spec["mu"], dtype=float))
        kappa = float(spec["kappa"])
        if kappa <= 0:
            raise ValueError("von Mises concentration must be positive")
        # inversion sampler for the cosine, uniform azimuth
        u = rng.uniform()
        w = 1.0 + np.log(u + (1.0 - u) * np.exp(-2.0 * kappa)) / kappa
        phi = rng.uniform(0.0, 2.0 * np.pi)
        s = np.sqrt(max(0.0, 1.0 - w * w))
        local = np.array([s * np.cos(phi), s * np.sin(phi), w])
        # rotate e3 to mu
        if mu[2] > 1.0 - 1e-12:
            return local
        if mu[2] < -1.0 + 1e-12:
            return np.array([local[0], -local[1], -local[2]])
        axis = np.cross(np.array([0.0, 0.0, 1.0]), mu)
        axis /= np.linalg.norm(axis)
        ang = np.arccos(mu[2])
        k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
        rot = np.eye(3) + np.sin(ang) * k + (1 - np.cos(ang)) * (k @ k)
        return rot @ local
    raise ValueError(f"unknown initial sampler {spec!r}")


@dataclass
class PathEnsemble:
    """Simulated orientation paths together with the noise that produced them."""

    times: np.ndarray  # (m+1,)
    paths: np.ndarray  # (n, m+1, 3)
    increments: np.ndarray  # (n, m, 3)
    seed: int
    params: SdeParams
    h_spec: TorqueFieldSpec = field(default_factory=TorqueFieldSpec.zero)

    @property
    def n(self):
        return self.paths.shape[0]

    @property
    def dt(self):
        return self.params.dt

    def save(self, run_dir):
        """Serialize: paths as CSV (t, i, xi1..xi3), increments as raw f64 + JSON header."""
        import os

        os.makedirs(run_dir, exist_ok=True)
        with open(os.path.join(run_dir, "paths.csv"), "w") as f:
            f.write("t,i,xi1,xi2,xi3\n")
            for k, t in enumerate(self.times):
                for i in range(self.n):
                    p = self.paths[i, k]
                    f.write(f"{float(t)!r},{i},{float(p[0])!r},{float(p[1])!r},{float(p[2])!r}\n")
        self.increments.astype("<f8").tofile(os.path.join(run_dir, "increments.bin"))
        header = {
            "shape": list(self.increments.shape),
            "dtype": "<f8",
            "seed": int(self.seed),
            "params": self.params.to_dict(),
            "h_spec": self.h_spec.to_dict(),
            "times": [float(self.times[0]), float(self.times[-1])],
        }
        with open(os.path.join(run_dir, "increments.json"), "w") as f:
            json.dump(header, f, indent=2, sort_keys=True)


def ito_drift(xi, t, h_spec: TorqueFieldSpec):
    """Ito-form drift -2 xi + P_{xi^perp} h(t) (unit-Deborah scaling)."""
    xi = np.asarray(xi, dtype=float)
    h = h_spec(t)
    return -2.0 * xi + (h - np.dot(xi, h) * xi)


def heun_step(xi, t, dt, dB, h_spec: TorqueFieldSpec, scaling="deborah_one", phi_n=None):
    """One Stratonovich Heun step followed by renormalization."""
    xi = np.asarray(xi, dtype=float)
    dB = np.asarray(dB, dtype=float)
    if not (np.all(np.isfinite(xi)) and np.all(np.isfinite(dB))):
        raise ValueError("nonfinite state or increment")
    if scaling == "deborah_one":
        dm, nm = 1.0, 1.0
    else:
        dm, nm = 1.0 / phi_n, 1.0 / np.sqrt(phi_n)
    out = backend.heun_paths(xi[None, :], dB[None, None, :], t, dt, h_spec.poly, dm, nm, False)
    return np.asarray(out)[0]


def draw_increments(seed, i, m, dt, sampler_spec=None):
    """Increments (and optional initial state) from particle i's stream."""
    rng = particle_rng(seed, i)
    xi0 = sample_initial(sampler_spec, rng) if sampler_spec is not None else None
    dB = rng.normal(scale=np.sqrt(dt), size=(m, 3))
    return xi0, dB


def simulate_ensemble(n, initial, sde: SdeParams, h_spec=None) -> PathEnsemble:
    """Simulate n independent orientation paths, storing paths and increments.

    Deterministic given (seed, params): path i consumes the stream keyed by
    (seed, i), drawing the initial state first and the increments second.
    """
    if n < 1:
        raise ValueError("need at least one particle")
    h_spec = h_spec or TorqueFieldSpec.zero()
    m = sde.n_steps
    xi0 = np.empty((n, 3))
    dB = np.empty((n, m, 3))
    for i in range(n):
        xi0[i], dB[i] = draw_increments(sde.seed, i, m, sde.dt, initial)
    dm, nm = sde.multipliers
    stepper = backend.heun_paths if sde.scheme == "heun_stratonovich" else backend.euler_ito_paths
    paths = np.asarray(stepper(xi0, dB, 0.0, sde.dt, h_spec.poly, dm, nm, True))
    times = np.arange(m + 1) * sde.dt
    ens = PathEnsemble(times, paths, dB, sde.seed, sde, h_spec)
    worst = np.max(np.abs(np.linalg.norm(paths, axis=2) - 1.0))
    if worst > UNIT_TOL:
        raise RuntimeError(f"unit-norm invariant violated: {worst:.3e}")
    return ens


def simulate_stream(n, initial, sde: SdeParams, h_spec, observer, chunk=None):
    """Memory-light simulation: notify an observer per step, store nothing.

    observer(k, t_next, xi_prev, xi_next, dB_k, idx) is called once per step
    per particle chunk; idx is the slice of particle indices in the chunk.
    Used for large ensembles where full path storage is not affordable.
    """
    h_spec = h_spec or TorqueFieldSpec.zero()
    m = sde.n_steps
    dm, nm = sde.multipliers
    chunk = chunk or n
    poly = h_spec.poly
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        nn = stop - start
        xi = np.empty((nn, 3))
        dB = np.empty((nn, m, 3))
        for i in range(nn):
            xi[i], dB[i] = draw_increments(sde.seed, start + i, m, sde.dt, initial)
        idx = slice(start, stop)
        for k in range(m):
            t = k * sde.dt
            nxt = np.asarray(
                backend.heun_paths(xi, dB[:, k : k + 1], t, sde.dt, poly, dm, nm, False)
            )
            observer(k, t + sde.dt, xi, nxt, dB[:, k], idx)
            xi = nxt
