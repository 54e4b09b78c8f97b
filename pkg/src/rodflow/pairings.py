"""Scalar pairings of the stochastic velocity field with test functions.

The Hilbert-valued Stratonovich integral is never assembled; every
functional is reduced to scalar Stratonovich/Ito sums over the same
Brownian increments that drove the orientation paths, plus deterministic
quadrature of empirical-measure pairings.  Conventions:

* Stratonovich sums are midpoint-in-the-integrand on the SDE grid;
* the stresslet stochastic term of the velocity pairing enters with the
  sign that makes E[Phi_phi] = 0 under the stress identity
  sigma = gamma_E * int (Id - 3 xi (x) xi) f dxi.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fokker_planck as fp
from .sde import PathEnsemble, TorqueFieldSpec, simulate_stream
from .tensors import ResistanceParams


@dataclass
class PairingResult:
    """Per-realization values of a scalar functional with summary statistics."""

    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.values = np.atleast_1d(np.asarray(self.values, dtype=float))

    @property
    def count(self):
        return self.values.size

    @property
    def mean(self):
        return float(self.values.mean())

    @property
    def stderr(self):
        if self.count < 2:
            return float("inf")
        return float(self.values.std(ddof=1) / np.sqrt(self.count))

    def z_score(self, target=0.0):
        diff = self.mean - target
        if self.stderr == 0.0:
            return 0.0 if diff == 0.0 else float("inf")
        return diff / self.stderr

    def to_dict(self):
        return {
            "functional": self.label,
            "count": self.count,
            "mean": self.mean,
            "stderr": self.stderr,
            "z_score": float(self.z_score()),
        }


def stratonovich_scalar(values, dB):
    """Midpoint sum sum_k (g_k + g_{k+1})/2 . dB_k on the path grid.

    values: (m+1, ...) integrand at step endpoints; dB: (m, ...) matching
    increments; the trailing axes are contracted.
    """
    values = np.asarray(values, dtype=float)
    dB = np.asarray(dB, dtype=float)
    if values.shape[0] != dB.shape[0] + 1 or values.shape[1:] != dB.shape[1:]:
        raise ValueError("integrand endpoints and increments are misaligned")
    mid = 0.5 * (values[:-1] + values[1:])
    return float(np.sum(mid * dB))


def ito_scalar(values, dB):
    """Left-endpoint sum sum_k g_k . dB_k."""
    values = np.asarray(values, dtype=float)
    dB = np.asarray(dB, dtype=float)
    if values.shape[0] != dB.shape[0] + 1 or values.shape[1:] != dB.shape[1:]:
        raise ValueError("integrand endpoints and increments are misaligned")
    return float(np.sum(values[:-1] * dB))


def _trapz(values, dt):
    values = np.asarray(values, dtype=float)
    return dt * (values.sum(axis=0) - 0.5 * (values[0] + values[-1]))


def _sqrt_r2_apply(xi, v, params):
    """sqrt(R2(xi)) v for batched unit xi (..., 3) and vectors v (..., 3)."""
    sg = np.sqrt(params.gamma_rot)
    sp_ = np.sqrt(params.gamma_rot_par)
    proj = np.sum(xi * v, axis=-1, keepdims=True)
    return sg * v + (sp_ - sg) * proj * xi


def phi_functional(ensemble: PathEnsemble, centers, params: ResistanceParams, phi):
    """One realization of Phi_phi(phi_n^{-1} u_app, S_n), fully reduced.

    Combines per particle the stresslet Stratonovich term
    -int Dphi : S(xi) sqrt(R2) odB, the torque term
    -int curl(phi) . sqrt(R2) odB (both scaled by sqrt(2 gamma_rot)/n and
    the ensemble's noise multiplier), and the deterministic pairing
    -gamma_E <S_n, (Id - 3 xi (x) xi) : grad phi>.
    """
    stoch_total, det_total = phi_functional_parts(ensemble, centers, params, phi)
    return float(stoch_total + det_total)


def phi_functional_parts(ensemble: PathEnsemble, centers, params: ResistanceParams, phi):
    """(stochastic, deterministic) parts of phi_functional.

    The stochastic part is the reduced velocity pairing <v, lap phi>;
    the deterministic part is -gamma_E <S_n, (Id - 3 xi xi) : grad phi>,
    so their expectations cancel in the mean-field limit.
    """
    centers = np.asarray(centers, dtype=float)
    paths = ensemble.paths  # (n, m+1, 3)
    n, m1, _ = paths.shape
    if centers.shape != (n, 3):
        raise ValueError("one center per path is required")
    _, noise_mult = ensemble.params.multipliers
    sg = np.sqrt(params.gamma_rot)
    coef = params.gamma_E / params.gamma_rot
    # the family is separable in time: cache the spatial factors at the
    # (frozen) centers and scale by the window per step
    grad_x = phi.grad_x(centers)  # (n, 3, 3), grad[a, b] = d_b phi_a
    dsym_x = 0.5 * (grad_x + np.swapaxes(grad_x, -1, -2))
    curl_x = phi.curl_x(centers)
    w = np.array([phi.window(t) for t in ensemble.times])
    det = np.empty((m1, n))
    integrands = np.empty((m1, n, 3))
    for k in range(m1):
        xi = paths[:, k]
        # Dphi : S(xi)(sqrt(R2) e_c) = (gamma_E/gamma_rot) sqrt(gamma_rot) (xi x Dphi xi)_c
        dxi = np.einsum("nab,nb->na", dsym_x, xi)
        gs = coef * sg * np.cross(xi, dxi)
        gt = _sqrt_r2_apply(xi, curl_x, params)
        integrands[k] = w[k] * (gs + gt)
        det[k] = w[k] * np.einsum("na,nab,nb->n", xi, grad_x, xi)
    mid = 0.5 * (integrands[:-1] + integrands[1:])
    stoch = np.einsum("kna,nka->n", mid, ensemble.increments)
    stoch_total = -np.sqrt(2.0 * params.gamma_rot) * noise_mult * stoch.mean()
    # deterministic pairing: (Id - 3 xi xi) : grad phi = -3 xi . (grad phi) xi
    # because div phi = 0, so -gamma_E <S_n, .> = +3 gamma_E <xi.grad phi xi>
    det_total = 3.0 * params.gamma_E * _trapz(det, ensemble.dt).mean()
    return float(stoch_total), float(det_total)


@dataclass
class PsiResult:
    direct: float
    identity: float

    @property
    def discrepancy(self):
        return abs(self.direct - self.identity)


def _density_pairing(fn_of_xi, density: fp.SphericalDensity):
    basis = fp.Basis.get(density.l_max)
    vals = basis.synthesize(density.coeffs)
    return float(np.sum(basis.grid.weights * vals * fn_of_xi(basis.grid.xyz)))


def psi_functional(ensemble: PathEnsemble, centers, psi, f0: fp.SphericalDensity) -> PsiResult:
    """Psi_psi(S_n) via direct quadrature and via the martingale identity.

    Direct: <f0, psi(0)> - <S_n(T), psi(T)> + int <S_n, dt psi
    + grad_xi psi . P h + lap_S2 psi> dt.  Identity: <f0 - S_n(0), psi(0)>
    - (1/n) sum_i int grad_xi psi . sigma_D(xi_i) dB_i with left endpoints.
    The initial law f0 is the product of the empirical centers with one
    orientation density shared by all particles.
    """
    centers = np.asarray(centers, dtype=float)
    paths = ensemble.paths
    n, m1, _ = paths.shape
    h_spec = ensemble.h_spec or TorqueFieldSpec.zero()
    times = ensemble.times

    def f0_pair(t):
        return np.mean(
            [_density_pairing(lambda x, c=c: psi.value(t, c, x), f0) for c in centers]
        )

    interior = np.empty((m1, n))
    grads = np.empty((m1, n, 3))
    for k, t in enumerate(times):
        xi = paths[:, k]
        h = h_spec(t)
        g = psi.grad_xi(t, centers, xi)
        grads[k] = g
        interior[k] = psi.dt(t, centers, xi) + g @ h + psi.lap_sphere(t, centers, xi)
    direct = (
        f0_pair(times[0])
        - np.mean(psi.value(times[-1], centers, paths[:, -1]))
        + _trapz(interior, ensemble.dt).mean()
    )
    # sigma_D(xi) dB = sqrt(2) xi x dB, and grad_xi psi is tangential
    cross = np.cross(paths[:, :-1], ensemble.increments)  # (n, m, 3)
    ito = np.sqrt(2.0) * np.einsum("kna,nka->n", grads[:-1], cross)
    identity = (
        f0_pair(times[0])
        - np.mean(psi.value(times[0], centers, paths[:, 0]))
        - ito.mean()
    )
    return PsiResult(float(direct), float(identity))


def theta_functional(times, centers, theta, f0_centers, dt):
    """Theta_theta = <f0 - S_n, theta (x) 1>: time-integrated spatial mismatch."""
    centers = np.asarray(centers, dtype=float)
    f0_centers = np.asarray(f0_centers, dtype=float)
    vals = np.array(
        [
            np.mean(theta.value(t, f0_centers)) - np.mean(theta.value(t, centers))
            for t in times
        ]
    )
    return float(_trapz(vals, dt))


def expectation_identity_check(
    params: ResistanceParams,
    h_spec,
    a_fn,
    b_fn,
    n_particles,
    sde_params,
    initial,
    l_max=16,
):
    """Monte Carlo check of the torque- and stress-average identities.

    Estimates E[int b(t) . sqrt(R2) odB] (target 0) and
    E[int A(t) : S(xi) sqrt(R2) odB] against
    (gamma_E / sqrt(2 gamma_rot)) E int (3 xi (x) xi - Id) : A(t) dt,
    the right side integrated from the spectrally evolved density.
    Returns a report dict with z-scores.
    """
    h_spec = h_spec or TorqueFieldSpec.zero()
    sg = np.sqrt(params.gamma_rot)
    coef = params.gamma_E / params.gamma_rot

    vals_b = np.zeros(n_particles)
    vals_a = np.zeros(n_particles)

    def integrand(t, xi):
        b = np.broadcast_to(b_fn(t), xi.shape)
        gb = _sqrt_r2_apply(xi, b, params)
        a = np.asarray(a_fn(t), dtype=float)
        axi = xi @ a.T
        ga = coef * sg * np.cross(xi, axi)
        return gb, ga

    def observer(k, t_next, xi_prev, xi_next, dB_k, idx):
        t_prev = t_next - sde_params.dt
        gb0, ga0 = integrand(t_prev, xi_prev)
        gb1, ga1 = integrand(t_next, xi_next)
        vals_b[idx] += np.sum(0.5 * (gb0 + gb1) * dB_k, axis=1)
        vals_a[idx] += np.sum(0.5 * (ga0 + ga1) * dB_k, axis=1)

    simulate_stream(n_particles, initial, sde_params, h_spec, observer, chunk=4096)

    # right side from the Fokker-Planck evolution of the same initial law
    f0 = _initial_density(initial, l_max)
    times, traj = fp.evolve(f0, h_spec, sde_params.t_end, dt=min(sde_params.dt, 1e-3), store=True)
    basis = fp.Basis.get(l_max)
    xyz = basis.grid.xyz
    outer = np.einsum("ka,kb->kab", xyz, xyz)
    rhs_t = np.empty(len(times))
    for j, t in enumerate(times):
        a = np.asarray(a_fn(t), dtype=float)
        dens = basis.synthesize(traj[j].coeffs)
        integr = np.einsum("kab,ab->k", 3.0 * outer, a) - np.trace(a)
        rhs_t[j] = np.sum(basis.grid.weights * dens * integr)
    rhs = params.gamma_E / np.sqrt(2.0 * params.gamma_rot) * _trapz(rhs_t, times[1] - times[0] if len(times) > 1 else 0.0)

    res_b = PairingResult(vals_b, "torque_average")
    res_a = PairingResult(vals_a, "stress_average")
    return {
        "torque": res_b.to_dict(),
        "stress": {
            **res_a.to_dict(),
            "rhs": float(rhs),
            "z_score": float(res_a.z_score(target=float(rhs))),
        },
    }


def _initial_density(initial, l_max):
    kind = initial.get("kind")
    if kind == "uniform":
        return fp.SphericalDensity.uniform(1.0, l_max)
    if kind == "delta":
        return fp.point_density(initial["xi"], l_max)
    if kind == "cap":
        return fp.cap_density(float(initial["cos_min"]), l_max)
    if kind == "von_mises":
        return fp.vmf_density(float(initial["kappa"]), initial["mu"], l_max)
    raise ValueError(f"unsupported initial law {initial!r}")
