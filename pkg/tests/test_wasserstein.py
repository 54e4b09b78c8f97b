import numpy as np
import pytest

from rodflow import fokker_planck as FP
from rodflow import wasserstein as W


def atoms(n, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, size=(n, 3))
    xi = rng.normal(size=(n, 3))
    xi /= np.linalg.norm(xi, axis=1, keepdims=True)
    return x, xi


def test_identical_sets_zero():
    x, xi = atoms(50)
    res = W.wasserstein1(x, xi, x, xi)
    assert res.method == "assignment"
    assert res.value <= 1e-7  # arccos loses half the precision near 1


def test_antipodal_orientations():
    x = np.zeros((1, 3))
    res = W.wasserstein1(x, [[0, 0, 1.0]], x, [[0, 0, -1.0]])
    assert abs(res.value - np.pi) <= 1e-12


def test_pure_translation():
    x, xi = atoms(20, seed=1)
    shift = np.array([0.7, 0.0, 0.0])
    res = W.wasserstein1(x, xi, x + shift, xi)
    assert abs(res.value - 0.7) <= 1e-7


def test_triangle_inequality():
    xa, xia = atoms(30, seed=2)
    xb, xib = atoms(30, seed=3)
    xc, xic = atoms(30, seed=4)
    dab = W.wasserstein1(xa, xia, xb, xib).value
    dbc = W.wasserstein1(xb, xib, xc, xic).value
    dac = W.wasserstein1(xa, xia, xc, xic).value
    assert dac <= dab + dbc + 1e-12
    assert abs(dab - W.wasserstein1(xb, xib, xa, xia).value) <= 1e-12


def test_lp_matches_assignment():
    xa, xia = atoms(25, seed=5)
    xb, xib = atoms(25, seed=6)
    exact = W.wasserstein1(xa, xia, xb, xib, method="assignment").value
    lp = W.wasserstein1(xa, xia, xb, xib, method="lp").value
    assert abs(exact - lp) <= 1e-9


def test_lp_with_nonuniform_weights():
    # splitting one atom into two coincident half-weight atoms changes nothing
    xa, xia = atoms(10, seed=7)
    xb, xib = atoms(10, seed=8)
    base = W.wasserstein1(xa, xia, xb, xib, method="lp").value
    xa2 = np.concatenate([xa, xa[:1]])
    xia2 = np.concatenate([xia, xia[:1]])
    w = np.concatenate([np.full(10, 0.1), [0.05]])
    w[0] = 0.05
    split = W.wasserstein1(xa2, xia2, xb, xib, w_a=w, method="lp").value
    assert abs(base - split) <= 1e-9


def test_unbalanced_masses_rejected():
    x, xi = atoms(5)
    with pytest.raises(ValueError, match="unbalanced"):
        W.wasserstein1(x, xi, x, xi, w_a=np.full(5, 0.3))
    with pytest.raises(ValueError):
        W.wasserstein1(x, xi, x, xi, w_a=np.array([1.0, 1.0, -0.5, 0.25, 0.25]))


def test_sinkhorn_close_to_exact():
    xa, xia = atoms(100, seed=9)
    xb, xib = atoms(100, seed=10)
    exact = W.wasserstein1(xa, xia, xb, xib, method="assignment").value
    ent = W.wasserstein1(xa, xia, xb, xib, method="sinkhorn", epsilon=1e-3).value
    assert abs(ent - exact) / exact <= 0.02


def test_auto_dispatch():
    xa, xia = atoms(12, seed=11)
    xb, xib = atoms(12, seed=12)
    assert W.wasserstein1(xa, xia, xb, xib).method == "assignment"
    w = np.full(12, 1 / 12.0)
    w[0], w[1] = 0.1, 2 / 12.0 - 0.1
    assert W.wasserstein1(xa, xia, xb, xib, w_a=w).method == "lp"
    assert (
        W.wasserstein1(xa, xia, xb, xib, size_cap=8).method == "lp"
    )  # over the exact cap but under the LP product cap
    xa, xia = atoms(40, seed=13)
    xb, xib = atoms(40, seed=14)
    old = W.LP_PRODUCT_CAP
    try:
        W.LP_PRODUCT_CAP = 100
        res = W.wasserstein1(xa, xia, xb, xib, size_cap=8)
        assert res.method == "sinkhorn"
    finally:
        W.LP_PRODUCT_CAP = old


def test_sample_orientations_moments():
    rng = np.random.default_rng(15)
    f = FP.vmf_density(2.0, [0, 0, 1.0], 12)
    xis = W.sample_orientations(f, 20000, rng)
    assert np.abs(np.linalg.norm(xis, axis=1) - 1).max() <= 1e-12
    # E[cos theta] = coth(2) - 1/2 for kappa = 2
    target = 1.0 / np.tanh(2.0) - 0.5
    assert abs(xis[:, 2].mean() - target) <= 4.0 / np.sqrt(20000)


def test_empirical_vs_density_self_consistency():
    rng = np.random.default_rng(16)
    f = FP.SphericalDensity.uniform(1.0, 8)
    x = rng.uniform(-0.5, 0.5, size=(200, 3))
    xi = W.sample_orientations(f, 200, rng)
    d_small = W.empirical_vs_density(x, xi, f, rng).value
    # uniform samples against the uniform law stay O(n^{-1/3})-close
    assert 0.0 < d_small < 1.2
    # a concentrated cloud is far from uniform: mean geodesic to a fixed axis
    xi_conc = np.tile([0.0, 0.0, 1.0], (200, 1))
    d_conc = W.empirical_vs_density(x, xi_conc, f, rng).value
    assert d_conc > d_small


def test_ground_cost_properties():
    x, xi = atoms(15, seed=17)
    c = W.ground_cost(x, xi, x, xi)
    assert np.abs(np.diag(c)).max() <= 1e-7
    assert np.abs(c - c.T).max() <= 1e-12
    assert c.max() <= np.pi + np.sqrt(12.0) + 1e-9
