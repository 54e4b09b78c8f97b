import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from rodflow import tensors as T


def random_unit(rng):
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def random_params(rng):
    g = rng.uniform(0.2, 3.0, size=4)
    return T.ResistanceParams(g[0], g[1], g[2], g[3], rng.uniform(-2.0, 2.0))


def test_skew_matrix_displayed_case():
    m = T.skew_matrix([0, 0, 1])
    assert np.array_equal(m, np.array([[0, -1, 0], [1, 0, 0], [0, 0, 0]], dtype=float))


def test_skew_matrix_zero():
    assert np.array_equal(T.skew_matrix([0, 0, 0]), np.zeros((3, 3)))


def test_skew_matrix_cross_product_oracle():
    rng = np.random.default_rng(0)
    for _ in range(20):
        t, v = rng.normal(size=3), rng.normal(size=3)
        m = T.skew_matrix(t)
        assert np.allclose(m @ v, np.cross(t, v), atol=1e-15 * max(1, np.abs(t).max() * np.abs(v).max()))
        assert np.allclose(m, -m.T)


def test_r2_axis_aligned():
    p = T.ResistanceParams(1, 1, 1.0, 2.0, 0.0)
    assert np.allclose(T.r2([0, 0, 1], p), np.diag([1.0, 1.0, 2.0]))


def test_r2_isotropic():
    p = T.ResistanceParams(1, 1, 0.7, 0.7, 0.0)
    rng = np.random.default_rng(1)
    for _ in range(5):
        assert np.allclose(T.r2(random_unit(rng), p), 0.7 * np.eye(3), atol=1e-14)


def test_r2_eigenvalues():
    rng = np.random.default_rng(2)
    for _ in range(20):
        p = random_params(rng)
        w = np.linalg.eigvalsh(T.r2(random_unit(rng), p))
        expect = np.sort([p.gamma_rot, p.gamma_rot, p.gamma_rot_par])
        assert np.allclose(w, expect, atol=1e-12)


def test_r2_sqrt_axis_aligned():
    p = T.ResistanceParams(1, 1, 4.0, 9.0, 0.0)
    assert np.allclose(T.r2_sqrt([0, 0, 1], p), np.diag([2.0, 2.0, 3.0]))


def test_r2_sqrt_and_inv_identities():
    rng = np.random.default_rng(3)
    for _ in range(50):
        p = random_params(rng)
        xi = random_unit(rng)
        s = T.r2_sqrt(xi, p)
        assert np.linalg.norm(s @ s - T.r2(xi, p)) <= 1e-13
        assert np.linalg.norm(T.r2_inv(xi, p) @ T.r2(xi, p) - np.eye(3)) <= 1e-13


def test_r2_sqrt_grad_degenerate_and_parallel():
    p = T.ResistanceParams(1, 1, 2.0, 2.0, 0.0)
    assert np.allclose(T.r2_sqrt_grad([0, 0, 1], p, [1, 0, 0]), 0.0)
    p2 = T.ResistanceParams(1, 1, 1.0, 4.0, 0.0)
    e3, e1 = np.array([0.0, 0, 1]), np.array([1.0, 0, 0])
    assert np.allclose(T.r2_sqrt_grad(e3, p2, e1), np.outer(e3, e1))
    xi = T.normalize(np.array([1.0, -2.0, 0.5]))
    assert np.allclose(T.r2_sqrt_grad(xi, p2, xi), (2 - 1) * (np.eye(3) + np.outer(xi, xi)))


@pytest.mark.parametrize("eps", [1e-3, 1e-4])
def test_r2_sqrt_grad_finite_differences(eps):
    # FD of xi -> sqrt(r2(xi)) b along a tangent direction tau equals the
    # Jacobian structure applied to b and contracted with tau
    rng = np.random.default_rng(4)
    p = T.ResistanceParams(1, 1, 1.3, 3.7, 0.0)
    for _ in range(10):
        xi = random_unit(rng)
        b = rng.normal(size=3)
        tau = np.cross(xi, rng.normal(size=3))
        tau /= np.linalg.norm(tau)
        plus = T.normalize(xi + eps * tau)
        minus = T.normalize(xi - eps * tau)
        fd = ((T.r2_sqrt(plus, p) - T.r2_sqrt(minus, p)) / (2 * eps)) @ b
        analytic = T.r2_sqrt_grad(xi, p, b) @ tau
        assert np.linalg.norm(fd - analytic) <= 30 * eps


def test_r2_sqrt_grad_fd_order():
    rng = np.random.default_rng(5)
    p = T.ResistanceParams(1, 1, 1.3, 3.7, 0.0)
    xi = random_unit(rng)
    b = rng.normal(size=3)
    tau = np.cross(xi, rng.normal(size=3))
    tau /= np.linalg.norm(tau)
    errs = []
    for eps in (1e-3, 1e-4):
        plus, minus = T.normalize(xi + eps * tau), T.normalize(xi - eps * tau)
        fd = ((T.r2_sqrt(plus, p) - T.r2_sqrt(minus, p)) / (2 * eps)) @ b
        errs.append(np.linalg.norm(fd - T.r2_sqrt_grad(xi, p, b) @ tau))
    order = np.log10(errs[0] / errs[1])
    assert order >= 1.9


def assembled_stresslet(xi, p, t):
    """Test oracle: assemble R_23^T R_2^{-1} T numerically."""
    xi = np.asarray(xi, dtype=float)
    omega = T.r2_inv(xi, p) @ np.asarray(t, dtype=float)
    outer = np.outer(np.cross(omega, xi), xi)
    return p.gamma_E * 0.5 * (outer + outer.T)


def test_stresslet_coupling_sphere_preset_zero():
    p = T.ResistanceParams.sphere()
    rng = np.random.default_rng(6)
    for _ in range(5):
        s = T.stresslet_coupling(random_unit(rng), p, rng.normal(size=3))
        assert np.allclose(s.to_matrix(), 0.0)


def test_stresslet_coupling_parallel_torque_zero():
    p = T.ResistanceParams.anisotropic()
    xi = T.normalize(np.array([1.0, 1.0, -0.5]))
    assert np.allclose(T.stresslet_coupling(xi, p, 2.5 * xi).to_matrix(), 0.0, atol=1e-15)


def test_stresslet_coupling_axis_case():
    p = T.ResistanceParams(1, 1, 1.0, 1.0, 1.0)
    s = T.stresslet_coupling([0, 0, 1], p, [1, 0, 0]).to_matrix()
    expect = np.zeros((3, 3))
    expect[1, 2] = expect[2, 1] = -0.5
    assert np.allclose(s, expect, atol=1e-15)


def test_stresslet_coupling_matches_assembled_product():
    rng = np.random.default_rng(7)
    for _ in range(50):
        p = random_params(rng)
        xi = random_unit(rng)
        t = rng.normal(size=3)
        closed = T.stresslet_coupling(xi, p, t).to_matrix()
        assert np.linalg.norm(closed - assembled_stresslet(xi, p, t)) <= 1e-13


def test_stresslet_coupling_symmetry_trace_equivariance():
    rng = np.random.default_rng(8)
    for _ in range(20):
        p = random_params(rng)
        xi = random_unit(rng)
        t = rng.normal(size=3)
        s = T.stresslet_coupling(xi, p, t).to_matrix()
        assert np.array_equal(s, s.T)
        assert abs(np.trace(s)) <= 1e-14
        r = Rotation.random(random_state=rng).as_matrix()
        s_rot = T.stresslet_coupling(r @ xi, p, r @ t).to_matrix()
        assert np.linalg.norm(s_rot - r @ s @ r.T) <= 1e-12


def test_sigma_d():
    rng = np.random.default_rng(9)
    assert np.allclose(T.sigma_d([0, 0, 1]), np.sqrt(2) * T.skew_matrix([0, 0, 1]))
    for _ in range(10):
        xi = random_unit(rng)
        sd = T.sigma_d(xi)
        assert np.linalg.norm(0.5 * sd @ sd.T - (np.eye(3) - np.outer(xi, xi))) <= 1e-14
        assert np.allclose(sd @ xi, 0.0, atol=1e-15)


def test_sym_traceless_roundtrip():
    rng = np.random.default_rng(10)
    m = rng.normal(size=(3, 3))
    s = T.SymTraceless3.from_matrix(m, tol=None)
    back = s.to_matrix()
    assert np.array_equal(back, back.T)
    assert abs(np.trace(back)) <= 1e-14
    with pytest.raises(ValueError):
        T.SymTraceless3.from_matrix(m)  # generic matrix is not traceless-symmetric


def test_resistance_params_validation_and_json():
    with pytest.raises(ValueError):
        T.ResistanceParams(gamma_rot=-1.0)
    p = T.ResistanceParams.from_dict(
        {"gamma_perp": 1, "gamma_par": 2, "gamma_rot": 3, "gamma_rot_par": 4, "gamma_E": -0.5}
    )
    assert p.gamma_E == -0.5
    with pytest.raises(ValueError):
        T.ResistanceParams.from_dict({"gamma_rot": 1, "bogus": 2})
    assert T.ResistanceParams.sphere().gamma_E == 0.0
