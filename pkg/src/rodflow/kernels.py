"""Closed-form Stokes singularity kernels and the superposed point-singularity field.

Conventions: Phi is the Stokes fundamental solution
    Phi(x) = (1/8pi) (I/|x| + x (x) x / |x|^3),
and for a constant 3x3 matrix M the contracted field is
    (M : grad Phi)_a = sum_{b,g} M_{gb} d_b Phi_{ag}(x).
All gradients of Phi are analytic; finite differences appear only in tests.
"""
from __future__ import annotations

import numpy as np

from .tensors import (
    ResistanceParams,
    SymTraceless3,
    skew_matrix,
    stresslet_coupling_batch,
    sym_traceless_to_matrix_batch,
)

_EYE = np.eye(3)


class SingularPointError(ValueError):
    """Raised when a kernel is evaluated at its singularity."""


def _check_nonzero(x):
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    if np.any(r == 0.0):
        raise SingularPointError("kernel evaluated at its singular point")
    return x, r


def oseen(x):
    """Stokes fundamental solution Phi(x), shape (..., 3, 3)."""
    x, r = _check_nonzero(x)
    r = r[..., None, None]
    outer = x[..., :, None] * x[..., None, :]
    return (_EYE / r + outer / r**3) / (8.0 * np.pi)


def grad_oseen(x):
    """Analytic gradient of Phi: G[..., a, g, b] = d_b Phi_{ag}(x)."""
    x, r = _check_nonzero(x)
    r3 = (r**3)[..., None, None, None]
    r5 = (r**5)[..., None, None, None]
    d = _EYE
    xa = x[..., :, None, None]
    xg = x[..., None, :, None]
    xb = x[..., None, None, :]
    dag = d[:, :, None]
    dab = d[:, None, :]
    dgb = d[None, :, :]
    return (-dag * xb / r3 + (dab * xg + dgb * xa) / r3 - 3.0 * xa * xg * xb / r5) / (8.0 * np.pi)


def hess_oseen(x):
    """Second gradient of Phi: H[..., a, g, b, e] = d_e d_b Phi_{ag}(x)."""
    x, r = _check_nonzero(x)
    r3 = (r**3)[..., None, None, None, None]
    r5 = (r**5)[..., None, None, None, None]
    r7 = (r**7)[..., None, None, None, None]
    d = _EYE
    xa = x[..., :, None, None, None]
    xg = x[..., None, :, None, None]
    xb = x[..., None, None, :, None]
    xe = x[..., None, None, None, :]
    dag = d[:, :, None, None]
    dab = d[:, None, :, None]
    dae = d[:, None, None, :]
    dgb = d[None, :, :, None]
    dge = d[None, :, None, :]
    dbe = d[None, None, :, :]
    out = (
        -dag * (dbe / r3 - 3.0 * xb * xe / r5)
        + (dab * dge + dgb * dae) / r3
        - 3.0 * (dab * xg + dgb * xa) * xe / r5
        - 3.0 * (dae * xg * xb + dge * xa * xb + dbe * xa * xg) / r5
        + 15.0 * xa * xg * xb * xe / r7
    )
    return out / (8.0 * np.pi)


def contract_raw(m, x):
    """Raw contraction sum_{g,b} M_{gb} d_b Phi_{ag}(x) for m (..., 3, 3)."""
    g = grad_oseen(x)
    return np.einsum("...gb,...agb->...a", np.asarray(m, dtype=float), g)


def contract_raw_gradient(m, x):
    """Velocity gradient of the raw contraction: out[..., a, e] = d_e (M : grad Phi)_a."""
    h = hess_oseen(x)
    return np.einsum("...gb,...agbe->...ae", np.asarray(m, dtype=float), h)


# Normalization of the point-singularity fields.  The raw index contraction of
# a torque's skew matrix against grad Phi comes out as -2x the classical
# rotlet; the field operators are normalized so that a point torque T
# generates exactly T x x / (8 pi |x|^3).
FIELD_NORM = -0.5


def contract_field(m, x):
    """Singularity field of a moment matrix M, rotlet-normalized."""
    return FIELD_NORM * contract_raw(m, x)


def contract_field_gradient(m, x):
    """Velocity gradient of contract_field."""
    return FIELD_NORM * contract_raw_gradient(m, x)


def rotlet_field(t, x):
    """Velocity of a point torque: [t]_M : grad Phi(x) = t x x / (8 pi |x|^3)."""
    return contract_field(skew_matrix(t), x)


def stresslet_field(s: SymTraceless3, x):
    """Velocity of a point stresslet: S : grad Phi(x), same normalization."""
    return contract_field(s.to_matrix(), x)


def singularity_matrices(orientations, torques, params: ResistanceParams):
    """Per-particle forcing matrices [T_i]_M + S(xi_i) T_i, shape (n, 3, 3)."""
    orientations = np.asarray(orientations, dtype=float)
    torques = np.asarray(torques, dtype=float)
    n = orientations.shape[0]
    m = np.zeros((n, 3, 3))
    m[:, 0, 1] = -torques[:, 2]
    m[:, 1, 0] = torques[:, 2]
    m[:, 0, 2] = torques[:, 1]
    m[:, 2, 0] = -torques[:, 1]
    m[:, 1, 2] = -torques[:, 0]
    m[:, 2, 1] = torques[:, 0]
    s = stresslet_coupling_batch(orientations, params, torques)
    return m + sym_traceless_to_matrix_batch(s)


def l_n_app_eval(centers, orientations, torques, params: ResistanceParams, x):
    """Superposed point-torque + point-stresslet velocity field at probe(s) x.

    centers: (n, 3); orientations, torques: (n, 3); x: (3,) or (p, 3).
    """
    centers = np.asarray(centers, dtype=float)
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = x[None, :] if single else x
    m = singularity_matrices(orientations, torques, params)
    dx = pts[:, None, :] - centers[None, :, :]  # (p, n, 3)
    field = contract_field(np.broadcast_to(m, dx.shape[:2] + (3, 3)), dx).sum(axis=1)
    return field[0] if single else field


def l_n_app_orientation_grad(centers, orientations, torques, params: ResistanceParams, x, j, tangent):
    """Derivative of the field along orientation j in a tangent direction.

    Only the stresslet coefficient depends on xi_j, so the derivative is the
    field of dS = (gamma_E/gamma_rot) sym((T x tau)(x)xi + (T x xi)(x)tau).
    """
    orientations = np.asarray(orientations, dtype=float)
    tangent = np.asarray(tangent, dtype=float)
    xi = orientations[j]
    if abs(np.dot(tangent, xi)) > 1e-10 * max(1.0, np.linalg.norm(tangent)):
        raise ValueError("tangent direction must be orthogonal to the orientation")
    t = np.asarray(torques, dtype=float)[j]
    a = np.outer(np.cross(t, tangent), xi) + np.outer(np.cross(t, xi), tangent)
    ds = 0.5 * (params.gamma_E / params.gamma_rot) * (a + a.T)
    x = np.asarray(x, dtype=float)
    dx = x - np.asarray(centers, dtype=float)[j]
    return contract_field(ds, dx)


class StressField:
    """Symmetric-traceless stress on a rectilinear 3D grid.

    nodes: (k, 3) node positions; values: (k, 5) traceless components;
    spacing: scalar grid step (uniform in all directions).
    """

    def __init__(self, nodes, values, spacing):
        self.nodes = np.asarray(nodes, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if spacing <= 0:
            raise ValueError("grid spacing must be positive")
        if self.nodes.shape[0] != self.values.shape[0] or self.values.shape[1] != 5:
            raise ValueError("nodes and 5-component values must align")
        self.spacing = float(spacing)

    def matrices(self):
        return sym_traceless_to_matrix_batch(self.values)


def velocity_from_stress(sigma: StressField, probes, warn=None):
    """Velocity generated by a compactly supported stress via midpoint quadrature.

    u(x) = sum_nodes sum_{g,b} sigma_{gb}(y) d_b Phi_{ag}(x - y) dy^3, the
    Newtonian-potential representation of the Stokes problem with source
    div sigma (raw contraction, no rotlet normalization).  The sign is fixed
    by the weak identity <u, lap phi> = <sigma, grad phi> for divergence-free
    phi.  Probes colliding with a node use the node-excluded sum; pass a
    callable `warn` to be notified.
    """
    probes = np.asarray(probes, dtype=float)
    single = probes.ndim == 1
    pts = probes[None, :] if single else probes
    mats = sigma.matrices()
    w = sigma.spacing**3
    out = np.zeros_like(pts)
    for k, x in enumerate(pts):
        dx = x - sigma.nodes
        r = np.linalg.norm(dx, axis=1)
        hit = r == 0.0
        if np.any(hit):
            if warn is not None:
                warn(f"probe {k} coincides with a stress node; excluded from the sum")
            dx = dx[~hit]
            m = mats[~hit]
        else:
            m = mats
        out[k] = contract_raw(m, dx).sum(axis=0) * w
    return out[0] if single else out
