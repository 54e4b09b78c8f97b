"""Pure-NumPy implementations of the hot inner loops.

Mirrors the signatures of the compiled extension `_fastcore`; the backend
module picks whichever is available.  Everything here is vectorized over
particles with a Python loop over time steps.
"""
from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"


def _h_of_t(poly, t):
    """Evaluate the polynomial-in-time torque field coefficient vector."""
    if poly.shape[0] == 0:
        return np.zeros(3)
    tp = t ** np.arange(poly.shape[0])
    return tp @ poly


def _tangential(h, xi):
    # P_{xi^perp} h = h - (xi.h) xi, rows of xi are unit vectors
    return h - (xi @ h)[:, None] * xi


def heun_paths(xi0, dB, t0, dt, poly, drift_mult, noise_mult, store):
    """Stratonovich Heun integration of d xi = sqrt(2) xi x odB + P h dt.

    xi0: (n, 3) unit vectors; dB: (n, m, 3) Brownian increments;
    poly: (k, 3) polynomial coefficients of the torque field h(t);
    drift_mult/noise_mult: scaling factors (1/phi and 1/sqrt(phi) in the
    fast-diffusion regime).  Returns (n, m+1, 3) if store else final (n, 3).
    """
    xi0 = np.asarray(xi0, dtype=float)
    dB = np.asarray(dB, dtype=float)
    poly = np.asarray(poly, dtype=float).reshape(-1, 3)
    n, m, _ = dB.shape
    xi = xi0.copy()
    s2 = np.sqrt(2.0) * noise_mult
    if store:
        out = np.empty((n, m + 1, 3))
        out[:, 0] = xi
    for k in range(m):
        t = t0 + k * dt
        db = dB[:, k]
        h0 = _h_of_t(poly, t)
        h1 = _h_of_t(poly, t + dt)
        a0 = drift_mult * _tangential(h0, xi)
        pred = xi + a0 * dt + s2 * np.cross(xi, db)
        a1 = drift_mult * _tangential(h1, pred / np.linalg.norm(pred, axis=1, keepdims=True))
        xi = xi + 0.5 * (a0 + a1) * dt + 0.5 * s2 * np.cross(xi + pred, db)
        xi /= np.linalg.norm(xi, axis=1, keepdims=True)
        if store:
            out[:, k + 1] = xi
    return out if store else xi


def euler_ito_paths(xi0, dB, t0, dt, poly, drift_mult, noise_mult, store):
    """Euler-Maruyama on the Ito form: drift -2 xi + P h, noise sqrt(2) xi x dB."""
    xi0 = np.asarray(xi0, dtype=float)
    dB = np.asarray(dB, dtype=float)
    poly = np.asarray(poly, dtype=float).reshape(-1, 3)
    n, m, _ = dB.shape
    xi = xi0.copy()
    s2 = np.sqrt(2.0) * noise_mult
    nm2 = noise_mult * noise_mult
    if store:
        out = np.empty((n, m + 1, 3))
        out[:, 0] = xi
    for k in range(m):
        t = t0 + k * dt
        h = _h_of_t(poly, t)
        drift = drift_mult * _tangential(h, xi) - 2.0 * nm2 * xi
        xi = xi + drift * dt + s2 * np.cross(xi, dB[:, k])
        xi /= np.linalg.norm(xi, axis=1, keepdims=True)
        if store:
            out[:, k + 1] = xi
    return out if store else xi


def pair_strain(centers, mats):
    """Deviatoric strain at every center from all other point singularities.

    centers: (n, 3); mats: (n, 3, 3) forcing matrices (torque skew + stresslet).
    Returns (n, 5) symmetric-traceless components of sym(grad u) at each
    center, excluding the particle's own field.  Raw contraction (callers
    apply the field normalization).  O(n^2).
    """
    from .kernels import contract_raw_gradient as contract_field_gradient

    centers = np.asarray(centers, dtype=float)
    mats = np.asarray(mats, dtype=float)
    n = centers.shape[0]
    out = np.zeros((n, 5))
    for i in range(n):
        dx = centers[i] - np.delete(centers, i, axis=0)
        m = np.delete(mats, i, axis=0)
        if dx.shape[0] == 0:
            continue
        grad = contract_field_gradient(m, dx).sum(axis=0)  # grad[a, e] = d_e u_a
        sym = 0.5 * (grad + grad.T)
        dev = sym - np.trace(sym) / 3.0 * np.eye(3)
        out[i] = (dev[0, 0], dev[1, 1], dev[0, 1], dev[0, 2], dev[1, 2])
    return out
