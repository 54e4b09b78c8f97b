import numpy as np
import pytest

from rodflow import testfuncs as TF


@pytest.fixture(scope="module")
def phi():
    return TF.DivFreeSpaceTime(x0=(0.1, -0.2, 0.0), rx=1.5, t0=0.0, t1=1.0, a=(0.3, -0.7, 1.0))


@pytest.fixture(scope="module")
def psi():
    return TF.ScalarSphereTime(rx=2.0, t0=0.0, t1=1.0, degree=(2, 0))


def interior_points(n=40, seed=0):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, 3)) * 0.5


def test_phi_divergence_free(phi):
    pts = interior_points()
    assert np.abs(phi.div(0.4, pts)).max() <= 1e-12
    # also via the trace of the gradient
    g = phi.grad(0.4, pts)
    assert np.abs(np.trace(g, axis1=-2, axis2=-1)).max() <= 1e-12


def test_phi_compact_support(phi):
    pts = interior_points()
    assert np.abs(phi.value(0.4, pts + 10.0)).max() == 0.0
    assert np.abs(phi.value(1.2, pts)).max() == 0.0
    assert np.abs(phi.value(0.0, pts)).max() == 0.0  # open window in time


def test_phi_gradient_finite_differences(phi):
    pts = interior_points()
    t = 0.37
    g = phi.grad(t, pts)
    eps = 1e-6
    for b in range(3):
        e = np.zeros(3)
        e[b] = eps
        fd = (phi.value(t, pts + e) - phi.value(t, pts - e)) / (2 * eps)
        assert np.abs(fd - g[..., b]).max() <= 1e-8


def test_phi_curl_and_dsym_consistency(phi):
    pts = interior_points()
    g = phi.grad(0.5, pts)
    curl = np.stack(
        [
            g[..., 2, 1] - g[..., 1, 2],
            g[..., 0, 2] - g[..., 2, 0],
            g[..., 1, 0] - g[..., 0, 1],
        ],
        axis=-1,
    )
    assert np.abs(phi.curl(0.5, pts) - curl).max() <= 1e-13
    d = phi.dsym(0.5, pts)
    assert np.abs(d - np.swapaxes(d, -1, -2)).max() == 0.0


def test_phi_laplacian_finite_differences(phi):
    pts = interior_points(10)
    t = 0.5
    lap = phi.lap(t, pts)
    eps = 1e-4
    fd = -6.0 * phi.value(t, pts)
    for b in range(3):
        e = np.zeros(3)
        e[b] = eps
        fd = fd + phi.value(t, pts + e) + phi.value(t, pts - e)
    assert np.abs(fd / eps**2 - lap).max() <= 1e-4 * max(1.0, np.abs(lap).max())


def test_window_derivative(phi):
    w = phi.window
    assert w(0.0) == 0.0 and w(1.0) == 0.0 and w(0.5) == 1.0
    eps = 1e-6
    for t in (0.2, 0.37, 0.8):
        fd = (w(t + eps) - w(t - eps)) / (2 * eps)
        assert abs(fd - w.derivative(t)) <= 1e-6


def unit_vectors(n=30, seed=1):
    rng = np.random.default_rng(seed)
    xis = rng.normal(size=(n, 3))
    return xis / np.linalg.norm(xis, axis=1, keepdims=True)


def test_psi_gradient_tangent_and_eigenvalue(psi):
    pts = interior_points(30)
    xis = unit_vectors()
    g = psi.grad_xi(0.4, pts, xis)
    assert np.abs(np.sum(g * xis, axis=-1)).max() <= 1e-13
    val = psi.value(0.4, pts, xis)
    assert np.abs(psi.lap_sphere(0.4, pts, xis) + 6.0 * val).max() == 0.0


def test_psi_gradient_finite_differences(psi):
    pts = interior_points(15, seed=2)
    xis = unit_vectors(15, seed=3)
    g = psi.grad_xi(0.4, pts, xis)
    rng = np.random.default_rng(4)
    eps = 1e-6
    for _ in range(3):
        tau = np.cross(xis, rng.normal(size=3))
        tau /= np.linalg.norm(tau, axis=-1, keepdims=True)
        plus = xis + eps * tau
        plus /= np.linalg.norm(plus, axis=-1, keepdims=True)
        minus = xis - eps * tau
        minus /= np.linalg.norm(minus, axis=-1, keepdims=True)
        fd = (psi.value(0.4, pts, plus) - psi.value(0.4, pts, minus)) / (2 * eps)
        assert np.abs(fd - np.sum(g * tau, axis=-1)).max() <= 1e-6


def test_psi_time_derivative(psi):
    pts = interior_points(10, seed=5)
    xis = unit_vectors(10, seed=6)
    eps = 1e-6
    for t in (0.25, 0.6):
        fd = (psi.value(t + eps, pts, xis) - psi.value(t - eps, pts, xis)) / (2 * eps)
        assert np.abs(fd - psi.dt(t, pts, xis)).max() <= 1e-6


def test_psi_unsupported_degree():
    with pytest.raises(ValueError):
        TF.ScalarSphereTime(degree=(3, 0))


def test_psi_without_window():
    psi = TF.ScalarSphereTime(degree=(1, 0), window=False)
    pts = np.zeros((2, 3))
    xis = np.array([[0, 0, 1.0], [1.0, 0, 0]])
    assert np.allclose(psi.value(123.0, pts, xis), [1.0, 0.0])
    assert np.allclose(psi.dt(123.0, pts, xis), 0.0)


def test_theta_support_and_values():
    theta = TF.SpatialTheta(rx=1.0, t0=0.0, t1=1.0)
    pts = np.array([[0.0, 0, 0], [5.0, 0, 0]])
    v = theta.value(0.5, pts)
    assert v[0] == 1.0 and v[1] == 0.0
    assert np.all(theta.value(1.5, pts) == 0.0)
