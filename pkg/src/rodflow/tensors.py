"""Tensor algebra for axisymmetric particle resistance.

All operations are pure functions of unit orientation vectors and the five
resistance scalars.  Matrices are plain (3, 3) float arrays; symmetric
traceless tensors have a dedicated 5-component representation so that
tracelessness is structural rather than numerical.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

UNIT_TOL = 1e-12


class OrientationError(ValueError):
    pass


def check_unit(xi):
    """Validate and return a unit 3-vector as a float array."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (3,) or not np.all(np.isfinite(xi)):
        raise OrientationError(f"orientation must be a finite 3-vector, got {xi!r}")
    if abs(np.linalg.norm(xi) - 1.0) > UNIT_TOL:
        raise OrientationError(f"orientation must be unit length, |xi| = {np.linalg.norm(xi)!r}")
    return xi


def normalize(xi):
    xi = np.asarray(xi, dtype=float)
    return xi / np.linalg.norm(xi, axis=-1, keepdims=True)


@dataclass(frozen=True)
class ResistanceParams:
    """The five scalars defining an axisymmetric particle's resistance.

    gamma_perp/gamma_par enter the (frozen) translational resistance and are
    carried only for configuration completeness; the rotational dynamics and
    the stress coupling use gamma_rot, gamma_rot_par and gamma_E.
    """

    gamma_perp: float = 1.0
    gamma_par: float = 1.0
    gamma_rot: float = 1.0
    gamma_rot_par: float = 1.0
    gamma_E: float = 0.0

    def __post_init__(self):
        for name in ("gamma_perp", "gamma_par", "gamma_rot", "gamma_rot_par"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v}")
        if not np.isfinite(self.gamma_E):
            raise ValueError(f"gamma_E must be finite, got {self.gamma_E}")

    @classmethod
    def sphere(cls):
        return cls(gamma_perp=1.0, gamma_par=1.0, gamma_rot=1.0, gamma_rot_par=1.0, gamma_E=0.0)

    @classmethod
    def anisotropic(cls):
        """Generic anisotropic preset used by the sweeps (nonzero stress coupling)."""
        return cls(gamma_perp=1.0, gamma_par=1.0, gamma_rot=1.0, gamma_rot_par=1.0, gamma_E=1.0)

    @classmethod
    def from_dict(cls, d: dict) -> "ResistanceParams":
        known = {"gamma_perp", "gamma_par", "gamma_rot", "gamma_rot_par", "gamma_E"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown resistance keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "gamma_perp": self.gamma_perp,
            "gamma_par": self.gamma_par,
            "gamma_rot": self.gamma_rot,
            "gamma_rot_par": self.gamma_rot_par,
            "gamma_E": self.gamma_E,
        }


class SymTraceless3:
    """Symmetric traceless 3x3 tensor stored as 5 independent components.

    Components are (m11, m22, m12, m13, m23); m33 = -m11 - m22 by
    construction, so the reconstructed matrix is exactly symmetric and
    traceless.
    """

    __slots__ = ("c",)

    def __init__(self, c):
        c = np.asarray(c, dtype=float)
        if c.shape != (5,):
            raise ValueError(f"expected 5 components, got shape {c.shape}")
        self.c = c

    @classmethod
    def zero(cls):
        return cls(np.zeros(5))

    @classmethod
    def from_matrix(cls, m, tol=1e-10):
        """Project a matrix onto its symmetric traceless part.

        Raises if the input deviates from symmetric-traceless by more than tol
        (pass tol=None to project silently).
        """
        m = np.asarray(m, dtype=float)
        sym = 0.5 * (m + m.T)
        dev = sym - np.trace(sym) / 3.0 * np.eye(3)
        if tol is not None and np.linalg.norm(m - dev) > tol * max(1.0, np.linalg.norm(m)):
            raise ValueError("matrix is not symmetric traceless within tolerance")
        return cls(np.array([dev[0, 0], dev[1, 1], dev[0, 1], dev[0, 2], dev[1, 2]]))

    def to_matrix(self):
        m11, m22, m12, m13, m23 = self.c
        return np.array(
            [
                [m11, m12, m13],
                [m12, m22, m23],
                [m13, m23, -m11 - m22],
            ]
        )

    def norm(self):
        return float(np.linalg.norm(self.to_matrix()))

    def __add__(self, other):
        return SymTraceless3(self.c + other.c)

    def __sub__(self, other):
        return SymTraceless3(self.c - other.c)

    def __mul__(self, s):
        return SymTraceless3(self.c * float(s))

    __rmul__ = __mul__

    def __repr__(self):
        return f"SymTraceless3({self.c.tolist()})"


def sym_traceless_from_matrix_batch(m):
    """(..., 3, 3) matrices -> (..., 5) component arrays (deviatoric part)."""
    m = np.asarray(m, dtype=float)
    sym = 0.5 * (m + np.swapaxes(m, -1, -2))
    tr = np.trace(sym, axis1=-2, axis2=-1)[..., None, None]
    dev = sym - tr / 3.0 * np.eye(3)
    return np.stack(
        [dev[..., 0, 0], dev[..., 1, 1], dev[..., 0, 1], dev[..., 0, 2], dev[..., 1, 2]],
        axis=-1,
    )


def sym_traceless_to_matrix_batch(c):
    """(..., 5) component arrays -> (..., 3, 3) matrices."""
    c = np.asarray(c, dtype=float)
    out = np.zeros(c.shape[:-1] + (3, 3))
    out[..., 0, 0] = c[..., 0]
    out[..., 1, 1] = c[..., 1]
    out[..., 2, 2] = -c[..., 0] - c[..., 1]
    out[..., 0, 1] = out[..., 1, 0] = c[..., 2]
    out[..., 0, 2] = out[..., 2, 0] = c[..., 3]
    out[..., 1, 2] = out[..., 2, 1] = c[..., 4]
    return out


def skew_matrix(t):
    """The skew matrix M with M v = t x v for all v."""
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise ValueError("skew_matrix: nonfinite input")
    return np.array(
        [
            [0.0, -t[2], t[1]],
            [t[2], 0.0, -t[0]],
            [-t[1], t[0], 0.0],
        ]
    )


def r2(xi, p: ResistanceParams):
    """Rotational resistance: gamma_rot (I - xi xi) + gamma_rot_par xi xi."""
    xi = check_unit(xi)
    outer = np.outer(xi, xi)
    return p.gamma_rot * (np.eye(3) - outer) + p.gamma_rot_par * outer


def r2_sqrt(xi, p: ResistanceParams):
    """Matrix square root of r2 via the projector decomposition."""
    xi = check_unit(xi)
    outer = np.outer(xi, xi)
    return np.sqrt(p.gamma_rot) * (np.eye(3) - outer) + np.sqrt(p.gamma_rot_par) * outer


def r2_inv(xi, p: ResistanceParams):
    xi = check_unit(xi)
    outer = np.outer(xi, xi)
    return (np.eye(3) - outer) / p.gamma_rot + outer / p.gamma_rot_par


def r2_sqrt_grad(xi, p: ResistanceParams, b):
    """Directional derivative structure of the square root of r2.

    Returns (sqrt(gamma_rot_par) - sqrt(gamma_rot)) [(xi.b) I + xi (x) b],
    i.e. grad_xi sqrt(r2) applied to the fixed vector b.
    """
    xi = check_unit(xi)
    b = np.asarray(b, dtype=float)
    coef = np.sqrt(p.gamma_rot_par) - np.sqrt(p.gamma_rot)
    return coef * (np.dot(xi, b) * np.eye(3) + np.outer(xi, b))


def stresslet_coupling(xi, p: ResistanceParams, t) -> SymTraceless3:
    """Torque-to-stresslet map: (gamma_E / gamma_rot) sym((t x xi) (x) xi).

    The cross product annihilates the parallel component of the inverse
    rotational resistance, which is what collapses the assembled product of
    the coupling tensor with r2_inv to this closed form.
    """
    xi = check_unit(xi)
    t = np.asarray(t, dtype=float)
    cx = np.cross(t, xi)
    outer = np.outer(cx, xi)
    sym = 0.5 * (p.gamma_E / p.gamma_rot) * (outer + outer.T)
    # (t x xi) . xi = 0, so sym is traceless by construction
    return SymTraceless3(np.array([sym[0, 0], sym[1, 1], sym[0, 1], sym[0, 2], sym[1, 2]]))


def stresslet_coupling_batch(xi, p: ResistanceParams, t):
    """Vectorized stresslet coupling: (..., 3) x (..., 3) -> (..., 5)."""
    xi = np.asarray(xi, dtype=float)
    t = np.asarray(t, dtype=float)
    cx = np.cross(t, xi)
    outer = cx[..., :, None] * xi[..., None, :]
    sym = 0.5 * (p.gamma_E / p.gamma_rot) * (outer + np.swapaxes(outer, -1, -2))
    return np.stack(
        [sym[..., 0, 0], sym[..., 1, 1], sym[..., 0, 1], sym[..., 0, 2], sym[..., 1, 2]],
        axis=-1,
    )


def sigma_d(xi):
    """Diffusion matrix sqrt(2) [xi]_M of the orientation SDE."""
    xi = check_unit(xi)
    return np.sqrt(2.0) * skew_matrix(xi)
