"""Smooth compactly supported test functions and their derivatives.

Three small parametric families, built symbolically so every derivative an
estimator needs comes from the same closed-form expression:

* DivFreeSpaceTime: phi(t, x) = w(t) curl(chi(x) a) -- divergence-free by
  construction, compact support in space and in (t0, t1);
* ScalarSphereTime: psi(t, x, xi) = w(t) chi(x) Y(xi) with Y a real solid
  harmonic restricted to the sphere (so lap_S2 psi = -l(l+1) psi);
* SpatialTheta: theta(t, x) = w(t) chi(x).

chi is the standard C^infty bump exp(1 - 1/(1 - s)) in s = |x - x0|^2/rx^2.
All three are separable in time, and the evaluators exploit that: spatial
factors can be cached across a time grid.
"""
from __future__ import annotations

import numpy as np
import sympy as sp

_T, _X1, _X2, _X3 = sp.symbols("t x1 x2 x3", real=True)
_XI1, _XI2, _XI3 = sp.symbols("xi1 xi2 xi3", real=True)
_X = sp.Matrix([_X1, _X2, _X3])


def _bump(s, profile="exp"):
    """Compactly supported bump in s: 1 at s=0, 0 for s >= 1.

    profile "exp" is the classical C^infty mollifier; "poly8" is (1-s)^8,
    only C^7 across the support boundary but with far tamer high
    derivatives, which matters when fourth derivatives are integrated
    against singular kernels.
    """
    if profile == "exp":
        return sp.Piecewise((sp.exp(1 - 1 / (1 - s)), s < 1), (0, True))
    if profile == "poly8":
        return sp.Piecewise(((1 - s) ** 8, s < 1), (0, True))
    raise ValueError(f"unknown bump profile {profile!r}")


def _space_bump(x0, rx, profile="exp"):
    s = sum((_X[i] - x0[i]) ** 2 for i in range(3)) / rx**2
    return _bump(s, profile)


def _lambdify_t(expr):
    fn = sp.lambdify((_T,), expr, modules="numpy")

    def call(t):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return float(fn(np.array([float(t)]))[0])

    return call


def _lambdify_x(expr):
    fn = sp.lambdify((_X1, _X2, _X3), expr, modules="numpy")

    def call(pts):
        pts = np.asarray(pts, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = fn(pts[..., 0], pts[..., 1], pts[..., 2])
        return np.broadcast_to(np.asarray(out, dtype=float), pts.shape[:-1]).copy()

    return call


def _lambdify_xi(expr):
    fn = sp.lambdify((_XI1, _XI2, _XI3), expr, modules="numpy")

    def call(xis):
        xis = np.asarray(xis, dtype=float)
        out = fn(xis[..., 0], xis[..., 1], xis[..., 2])
        return np.broadcast_to(np.asarray(out, dtype=float), xis.shape[:-1]).copy()

    return call


def _vector_x(exprs):
    fns = [_lambdify_x(e) for e in exprs]

    def call(pts):
        return np.stack([f(pts) for f in fns], axis=-1)

    return call


def _matrix_x(rows):
    fns = [[_lambdify_x(e) for e in row] for row in rows]

    def call(pts):
        return np.stack([np.stack([f(pts) for f in row], axis=-1) for row in fns], axis=-2)

    return call


class TimeWindow:
    """C^infty window supported on (t0, t1), with its derivative."""

    def __init__(self, t0, t1):
        if t1 <= t0:
            raise ValueError("need t1 > t0")
        self.t0, self.t1 = float(t0), float(t1)
        u = 2 * (_T - t0) / (t1 - t0) - 1
        expr = _bump(u**2)
        self.value = _lambdify_t(expr)
        self.derivative = _lambdify_t(sp.diff(expr, _T))

    def __call__(self, t):
        return self.value(t)


class DivFreeSpaceTime:
    """phi(t, x) = w(t) curl(chi(x) a): compactly supported, div phi = 0.

    Spatial factors are exposed as *_x evaluators (time-independent);
    value/grad/curl/lap/dsym multiply them by the window.
    """

    def __init__(self, x0=(0.0, 0.0, 0.0), rx=1.0, t0=0.0, t1=1.0, a=(0.0, 0.0, 1.0), profile="exp"):
        if rx <= 0:
            raise ValueError("need rx > 0")
        self.x0, self.rx = tuple(map(float, x0)), float(rx)
        self.a = tuple(map(float, a))
        self.profile = profile
        self.window = TimeWindow(t0, t1)
        self.t0, self.t1 = self.window.t0, self.window.t1
        pot = _space_bump(self.x0, self.rx, profile)
        grad_pot = sp.Matrix([sp.diff(pot, v) for v in (_X1, _X2, _X3)])
        phi = grad_pot.cross(sp.Matrix(self.a))
        grad = [[sp.diff(phi[i], v) for v in (_X1, _X2, _X3)] for i in range(3)]
        curl = [
            grad[2][1] - grad[1][2],
            grad[0][2] - grad[2][0],
            grad[1][0] - grad[0][1],
        ]
        lap = [sum(sp.diff(phi[i], v, 2) for v in (_X1, _X2, _X3)) for i in range(3)]
        self.value_x = _vector_x(list(phi))
        self.grad_x = _matrix_x(grad)  # grad[..., a, b] = d_b phi_a
        self.curl_x = _vector_x(curl)
        self.lap_x = _vector_x(lap)
        self.div_x = _lambdify_x(sum(grad[i][i] for i in range(3)))

    def value(self, t, pts):
        return self.window(t) * self.value_x(pts)

    def grad(self, t, pts):
        return self.window(t) * self.grad_x(pts)

    def curl(self, t, pts):
        return self.window(t) * self.curl_x(pts)

    def lap(self, t, pts):
        return self.window(t) * self.lap_x(pts)

    def div(self, t, pts):
        return self.window(t) * self.div_x(pts)

    def dsym(self, t, pts):
        g = self.grad(t, pts)
        return 0.5 * (g + np.swapaxes(g, -1, -2))


# low-order solid harmonics: homogeneous harmonic polynomials in xi whose
# restriction to the sphere is an eigenfunction of lap_S2 with -l(l+1)
SOLID_HARMONICS = {
    (0, 0): sp.Integer(1),
    (1, 0): _XI3,
    (1, 1): _XI1,
    (1, -1): _XI2,
    (2, 0): 3 * _XI3**2 - (_XI1**2 + _XI2**2 + _XI3**2),
    (2, 1): _XI1 * _XI3,
    (2, -1): _XI2 * _XI3,
    (2, 2): _XI1**2 - _XI2**2,
    (2, -2): _XI1 * _XI2,
}


class ScalarSphereTime:
    """psi(t, x, xi) = w(t) chi(x) Y_lm(xi), Y a solid harmonic of degree l."""

    def __init__(self, x0=(0.0, 0.0, 0.0), rx=1.0, t0=0.0, t1=1.0, degree=(2, 0), window=True):
        self.degree = tuple(int(v) for v in degree)
        if self.degree not in SOLID_HARMONICS:
            raise ValueError(f"unsupported harmonic degree {degree!r}")
        self.l = self.degree[0]
        self.window = TimeWindow(t0, t1) if window else None
        self.t0, self.t1 = float(t0), float(t1)
        self.chi = _lambdify_x(_space_bump(tuple(map(float, x0)), float(rx)))
        y = SOLID_HARMONICS[self.degree]
        self.harmonic = _lambdify_xi(y)
        self._grad_y = [_lambdify_xi(sp.diff(y, v)) for v in (_XI1, _XI2, _XI3)]

    def _w(self, t):
        return self.window(t) if self.window is not None else 1.0

    def value(self, t, pts, xis):
        return self._w(t) * self.chi(pts) * self.harmonic(xis)

    def dt(self, t, pts, xis):
        dw = self.window.derivative(t) if self.window is not None else 0.0
        return dw * self.chi(pts) * self.harmonic(xis)

    def grad_xi(self, t, pts, xis):
        """Tangential gradient on S^2: projected ambient gradient of the solid harmonic."""
        xis = np.asarray(xis, dtype=float)
        g = np.stack([f(xis) for f in self._grad_y], axis=-1)
        g = g - np.sum(g * xis, axis=-1, keepdims=True) * xis
        chi = self.chi(pts)
        return self._w(t) * chi[..., None] * g

    def lap_sphere(self, t, pts, xis):
        return -self.l * (self.l + 1.0) * self.value(t, pts, xis)


class SpatialTheta:
    """theta(t, x) = w(t) chi(x)."""

    def __init__(self, x0=(0.0, 0.0, 0.0), rx=1.0, t0=0.0, t1=1.0):
        self.window = TimeWindow(t0, t1)
        self.t0, self.t1 = self.window.t0, self.window.t1
        self.chi = _lambdify_x(_space_bump(tuple(map(float, x0)), float(rx)))

    def value(self, t, pts):
        return self.window(t) * self.chi(pts)
