import numpy as np
import pytest

from rodflow import fokker_planck as FP
from rodflow import pairings as P
from rodflow import sde as S
from rodflow.tensors import ResistanceParams
from rodflow.testfuncs import DivFreeSpaceTime, ScalarSphereTime, SpatialTheta

ANISO = ResistanceParams.anisotropic()
UNIFORM = {"kind": "uniform"}


def brownian(m, dt, seed=0, dim=None):
    rng = np.random.default_rng(seed)
    shape = (m,) if dim is None else (m, dim)
    dB = rng.normal(scale=np.sqrt(dt), size=shape)
    B = np.concatenate([np.zeros((1,) + shape[1:]), np.cumsum(dB, axis=0)])
    return B, dB


def test_stratonovich_constant_integrand():
    B, dB = brownian(500, 1e-3, seed=1)
    g = np.full(501, 2.5)
    assert abs(P.stratonovich_scalar(g, dB) - 2.5 * B[-1]) <= 1e-12


def test_stratonovich_b_db_closed_form():
    B, dB = brownian(4000, 1e-3, seed=2)
    assert abs(P.stratonovich_scalar(B, dB) - B[-1] ** 2 / 2) <= 1e-12


def test_stratonovich_chain_rule_refinement_order():
    # int B^2 odB = B(T)^3 / 3; coarsen the same path and fit the error rate
    m, dt = 2**12, 2.0 / 2**12
    B, dB = brownian(m, dt, seed=3)
    target = B[-1] ** 3 / 3
    errs = []
    for lvl in (4, 2, 0):
        step = 2**lvl
        Bc = B[::step]
        dBc = dB.reshape(-1, step).sum(axis=1)[:: 1]
        dBc = dB.reshape(m // step, step).sum(axis=1)
        errs.append(abs(P.stratonovich_scalar(Bc**2, dBc) - target))
    rates = np.diff(-np.log2(errs)) / 2.0
    assert np.mean(rates) >= 0.5  # order >= 1 in dt, halved per two levels


def test_misaligned_raises():
    with pytest.raises(ValueError):
        P.stratonovich_scalar(np.zeros(5), np.zeros(5))
    with pytest.raises(ValueError):
        P.ito_scalar(np.zeros((5, 3)), np.zeros((4, 2)))


def test_ito_stratonovich_quadratic_covariation():
    # for g = B: strat - ito = (1/2) sum (dB)^2 -> T/2
    B, dB = brownian(20000, 1e-4, seed=4)
    diff = P.stratonovich_scalar(B, dB) - P.ito_scalar(B, dB)
    assert abs(diff - 0.5 * 2.0) <= 0.05  # T = 2.0


def test_torque_average_zero():
    # E[int b . sqrt(R2(xi)) odB] = 0
    n = 2000
    ens = S.simulate_ensemble(n, UNIFORM, S.SdeParams(dt=2e-3, t_end=0.5, seed=5))
    b = np.array([0.3, -0.5, 1.0])
    vals = np.empty(n)
    for i in range(n):
        g = P._sqrt_r2_apply(ens.paths[i], np.broadcast_to(b, ens.paths[i].shape), ANISO)
        vals[i] = P.stratonovich_scalar(g, ens.increments[i])
    res = P.PairingResult(vals, "torque")
    assert abs(res.z_score()) <= 3.0


def test_ito_isometry():
    # Var[int sqrt(2) (xi x a) . dB] = 2 int E|xi x a|^2 dt = (4/3)|a|^2 T
    n, t_end = 3000, 0.5
    ens = S.simulate_ensemble(n, UNIFORM, S.SdeParams(dt=2e-3, t_end=t_end, seed=6))
    a = np.array([0.0, 0.0, 1.0])
    cross = np.sqrt(2.0) * np.cross(ens.paths[:, :-1], a)
    vals = np.einsum("nka,nka->n", cross, ens.increments)
    target = 4.0 / 3.0 * t_end
    sample_var = vals.var(ddof=1)
    # variance-of-variance stderr from the fourth moment
    v4 = np.mean((vals**2 - sample_var) ** 2) / n
    assert abs(sample_var - target) <= 5.0 * np.sqrt(v4)


@pytest.fixture(scope="module")
def centers64():
    rng = np.random.default_rng(7)
    return rng.uniform(-0.5, 0.5, size=(64, 3))


@pytest.fixture(scope="module")
def phi_bump():
    return DivFreeSpaceTime(rx=1.5, t0=0.0, t1=0.5, a=(0.3, -0.7, 1.0))


def phi_values(centers, params, phi, reps, n=64, dt=2e-3, t_end=0.5, seed0=100):
    vals = []
    for r in range(reps):
        ens = S.simulate_ensemble(n, UNIFORM, S.SdeParams(dt=dt, t_end=t_end, seed=seed0 + r))
        vals.append(P.phi_functional(ens, centers, params, phi))
    return P.PairingResult(np.array(vals), "phi")


def test_phi_functional_sphere_preset_mean_zero(centers64, phi_bump):
    res = phi_values(centers64, ResistanceParams.sphere(), phi_bump, 25)
    assert abs(res.z_score()) <= 3.0


def test_phi_functional_anisotropic_mean_zero(centers64, phi_bump):
    res = phi_values(centers64, ANISO, phi_bump, 25)
    assert abs(res.z_score()) <= 3.0


def test_phi_functional_support_avoidance(phi_bump):
    # centers outside the bump: every term vanishes identically
    centers = np.full((8, 3), 5.0)
    ens = S.simulate_ensemble(8, UNIFORM, S.SdeParams(dt=2e-3, t_end=0.5, seed=8))
    assert P.phi_functional(ens, centers, ANISO, phi_bump) == 0.0


def test_phi_functional_variance_scaling(phi_bump):
    rng = np.random.default_rng(9)
    second = []
    sizes = (16, 64, 256)
    for n in sizes:
        centers = rng.uniform(-0.5, 0.5, size=(n, 3))
        res = phi_values(centers, ANISO, phi_bump, 20, n=n, dt=4e-3, seed0=2000 + n)
        second.append(np.mean(res.values**2))
    slope = np.polyfit(np.log(sizes), np.log(second), 1)[0]
    assert abs(slope + 1.0) <= 0.45


@pytest.fixture(scope="module")
def f0_uniform():
    return FP.SphericalDensity.uniform(1.0, 8)


def test_psi_x_only_reduces_to_initial_mismatch(centers64, f0_uniform):
    psi = ScalarSphereTime(rx=2.0, t0=0.0, t1=0.5, degree=(0, 0))
    ens = S.simulate_ensemble(64, UNIFORM, S.SdeParams(dt=1e-3, t_end=0.5, seed=10))
    res = P.psi_functional(ens, centers64, psi, f0_uniform)
    # <f0 - S_n(0), psi(0)>: psi(0) has window value 0, so everything vanishes
    assert abs(res.direct) <= 1e-6 and abs(res.identity) <= 1e-12


def test_psi_x_only_without_window(centers64, f0_uniform):
    psi = ScalarSphereTime(rx=2.0, degree=(0, 0), window=False)
    ens = S.simulate_ensemble(64, UNIFORM, S.SdeParams(dt=1e-3, t_end=0.5, seed=11))
    res = P.psi_functional(ens, centers64, psi, f0_uniform)
    # orientation-independent psi: both routes equal the (vanishing, since the
    # x-marginals coincide and psi is deterministic in x) initial mismatch
    chi = psi.chi(centers64)
    expect = np.mean([P._density_pairing(lambda x: np.full(len(x), c), f0_uniform) for c in chi])
    expect -= np.mean(chi)
    assert abs(res.identity - expect) <= 1e-12
    assert abs(res.direct - expect) <= 1e-6


def test_psi_identity_discrepancy_refines(f0_uniform):
    # both routes evaluated on coarsened views of the same fine realizations;
    # the RMS mismatch over realizations must shrink as the grid refines
    psi = ScalarSphereTime(rx=2.0, t0=0.0, t1=0.5, degree=(2, 0))
    rng = np.random.default_rng(7)
    centers = rng.uniform(-0.5, 0.5, size=(32, 3))
    fine_dt, t_end, n = 0.5 / 1600, 0.5, 32
    discs = {step: [] for step in (16, 4, 1)}
    for seed in range(12):
        ens = S.simulate_ensemble(n, UNIFORM, S.SdeParams(dt=fine_dt, t_end=t_end, seed=500 + seed))
        for step in discs:
            coarse = S.PathEnsemble(
                times=ens.times[::step],
                paths=ens.paths[:, ::step],
                increments=ens.increments.reshape(n, -1, step, 3).sum(axis=2),
                seed=ens.seed,
                params=S.SdeParams(dt=fine_dt * step, t_end=t_end, seed=ens.seed),
                h_spec=ens.h_spec,
            )
            discs[step].append(P.psi_functional(coarse, centers, psi, f0_uniform).discrepancy)
    rms = [np.sqrt(np.mean(np.array(discs[s]) ** 2)) for s in (16, 4, 1)]
    assert rms[2] <= rms[0] / 2.5
    assert rms[1] <= rms[0]


def test_psi_y2_uniform_mean_zero(centers64, f0_uniform):
    psi = ScalarSphereTime(rx=2.0, t0=0.0, t1=0.5, degree=(2, 1))
    vals = []
    for r in range(25):
        ens = S.simulate_ensemble(48, UNIFORM, S.SdeParams(dt=2e-3, t_end=0.5, seed=300 + r))
        vals.append(P.psi_functional(ens, centers64[:48], psi, f0_uniform).direct)
    res = P.PairingResult(np.array(vals), "psi")
    assert abs(res.z_score()) <= 3.0


def test_theta_exact_atoms_zero(centers64):
    theta = SpatialTheta(rx=1.5, t0=0.0, t1=0.5)
    times = np.linspace(0, 0.5, 101)
    val = P.theta_functional(times, centers64, theta, centers64, times[1] - times[0])
    assert val == 0.0


def test_theta_disjoint_support(centers64):
    theta = SpatialTheta(x0=(20.0, 0.0, 0.0), rx=1.0, t0=0.0, t1=0.5)
    times = np.linspace(0, 0.5, 101)
    f0_centers = np.tile([20.0, 0.0, 0.0], (10, 1))  # all at the bump center
    val = P.theta_functional(times, centers64, theta, f0_centers, times[1] - times[0])
    # <f0, theta x 1> only: integral of the window
    w = np.array([theta.window(t) for t in times])
    expect = (times[1] - times[0]) * (w.sum() - 0.5 * (w[0] + w[-1]))
    assert abs(val - expect) <= 1e-12


def test_theta_sampling_error_decays():
    theta = SpatialTheta(rx=1.5, t0=0.0, t1=0.5)
    times = np.linspace(0, 0.5, 51)
    dt = times[1] - times[0]
    means = []
    for n in (32, 512):
        vals = []
        for r in range(40):
            rng = np.random.default_rng(1000 * n + r)
            a = rng.uniform(-1, 1, size=(n, 3))
            b = rng.uniform(-1, 1, size=(n, 3))
            vals.append(P.theta_functional(times, a, theta, b, dt))
        means.append(np.sqrt(np.mean(np.array(vals) ** 2)))
    # RMS scales like n^{-1/2}: factor 4 between n=32 and n=512 (allow slack)
    assert means[1] <= means[0] / 2.0


def test_expectation_identity_sphere_preset():
    a_mat = np.diag([0.3, 0.2, -0.5])
    rep = P.expectation_identity_check(
        ResistanceParams.sphere(),
        None,
        lambda t: a_mat,
        lambda t: np.array([0.2, -0.4, 1.0]),
        3000,
        S.SdeParams(dt=2e-3, t_end=0.5, seed=13),
        UNIFORM,
        l_max=8,
    )
    assert abs(rep["torque"]["z_score"]) <= 3.0
    assert rep["stress"]["rhs"] == 0.0
    assert abs(rep["stress"]["mean"]) <= 1e-14  # gamma_E = 0 kills the integrand


def test_expectation_identity_uniform_initial():
    a_mat = np.diag([1.0, 0.5, -1.5])
    rep = P.expectation_identity_check(
        ANISO,
        None,
        lambda t: a_mat,
        lambda t: np.array([0.2, -0.4, 1.0]),
        4000,
        S.SdeParams(dt=1e-3, t_end=0.5, seed=14),
        UNIFORM,
        l_max=8,
    )
    assert abs(rep["torque"]["z_score"]) <= 3.0
    assert abs(rep["stress"]["rhs"]) <= 1e-10
    assert abs(rep["stress"]["z_score"]) <= 3.0


def test_expectation_identity_delta_initial():
    a_mat = np.diag([0.3, 0.2, -0.5])
    t_end = 0.5
    rep = P.expectation_identity_check(
        ANISO,
        None,
        lambda t: a_mat,
        lambda t: np.zeros(3),
        20000,
        S.SdeParams(dt=1e-3, t_end=t_end, seed=15),
        {"kind": "delta", "xi": [0, 0, 1.0]},
        l_max=8,
    )
    stress = rep["stress"]
    # spherical-harmonic decay oracle for the right side
    val0 = 3 * a_mat[2, 2] - np.trace(a_mat)
    analytic = ANISO.gamma_E / np.sqrt(2 * ANISO.gamma_rot) * val0 * (1 - np.exp(-6 * t_end)) / 6
    assert abs(stress["rhs"] - analytic) <= 1e-5
    assert abs(stress["z_score"]) <= 3.0


def test_pairing_result_summary():
    res = P.PairingResult(np.array([1.0, 2.0, 3.0]), "demo")
    assert res.mean == 2.0
    assert abs(res.stderr - 1.0 / np.sqrt(3.0)) <= 1e-15
    d = res.to_dict()
    assert d["functional"] == "demo" and d["count"] == 3
    assert P.PairingResult(np.array([5.0])).stderr == float("inf")
