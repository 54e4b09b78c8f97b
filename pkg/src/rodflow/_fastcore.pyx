# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot loops: SDE time stepping and the O(n^2) pair-strain sum.

Same contracts as the pure-Python fallbacks in `_pycore`.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

BACKEND_NAME = "cython"


cdef inline void _poly_eval(double[:, ::1] poly, double t, double* h) noexcept:
    cdef Py_ssize_t k
    cdef double tp = 1.0
    h[0] = 0.0
    h[1] = 0.0
    h[2] = 0.0
    for k in range(poly.shape[0]):
        h[0] += poly[k, 0] * tp
        h[1] += poly[k, 1] * tp
        h[2] += poly[k, 2] * tp
        tp *= t


cdef inline void _cross(double* a, double* b, double* out) noexcept:
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


def heun_paths(xi0, dB, double t0, double dt, poly, double drift_mult,
               double noise_mult, bint store):
    cdef double[:, ::1] x0 = np.ascontiguousarray(xi0, dtype=np.float64)
    cdef double[:, :, ::1] db = np.ascontiguousarray(dB, dtype=np.float64)
    cdef double[:, ::1] pc = np.ascontiguousarray(
        np.asarray(poly, dtype=np.float64).reshape(-1, 3))
    cdef Py_ssize_t n = db.shape[0], m = db.shape[1]
    cdef Py_ssize_t i, k, a
    cdef double s2 = sqrt(2.0) * noise_mult
    cdef double h0[3], h1[3], xi[3], pred[3], cr[3], a0[3], a1[3], d[3]
    cdef double dot, nrm, t

    out_arr = np.empty((n, m + 1, 3)) if store else np.empty((n, 3))
    cdef double[:, :, ::1] paths
    cdef double[:, ::1] finals
    if store:
        paths = out_arr
    else:
        finals = out_arr

    for i in range(n):
        for a in range(3):
            xi[a] = x0[i, a]
        if store:
            for a in range(3):
                paths[i, 0, a] = xi[a]
        for k in range(m):
            t = t0 + k * dt
            _poly_eval(pc, t, h0)
            _poly_eval(pc, t + dt, h1)
            for a in range(3):
                d[a] = db[i, k, a]
            # predictor
            dot = xi[0] * h0[0] + xi[1] * h0[1] + xi[2] * h0[2]
            for a in range(3):
                a0[a] = drift_mult * (h0[a] - dot * xi[a])
            _cross(xi, d, cr)
            for a in range(3):
                pred[a] = xi[a] + a0[a] * dt + s2 * cr[a]
            nrm = sqrt(pred[0] * pred[0] + pred[1] * pred[1] + pred[2] * pred[2])
            # corrector (tangential projection at the normalized predictor)
            dot = (pred[0] * h1[0] + pred[1] * h1[1] + pred[2] * h1[2]) / nrm
            for a in range(3):
                a1[a] = drift_mult * (h1[a] - dot * pred[a] / nrm)
            cr[0] = (xi[1] + pred[1]) * d[2] - (xi[2] + pred[2]) * d[1]
            cr[1] = (xi[2] + pred[2]) * d[0] - (xi[0] + pred[0]) * d[2]
            cr[2] = (xi[0] + pred[0]) * d[1] - (xi[1] + pred[1]) * d[0]
            for a in range(3):
                xi[a] = xi[a] + 0.5 * (a0[a] + a1[a]) * dt + 0.5 * s2 * cr[a]
            nrm = sqrt(xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2])
            for a in range(3):
                xi[a] /= nrm
            if store:
                for a in range(3):
                    paths[i, k + 1, a] = xi[a]
        if not store:
            for a in range(3):
                finals[i, a] = xi[a]
    return out_arr


def euler_ito_paths(xi0, dB, double t0, double dt, poly, double drift_mult,
                    double noise_mult, bint store):
    cdef double[:, ::1] x0 = np.ascontiguousarray(xi0, dtype=np.float64)
    cdef double[:, :, ::1] db = np.ascontiguousarray(dB, dtype=np.float64)
    cdef double[:, ::1] pc = np.ascontiguousarray(
        np.asarray(poly, dtype=np.float64).reshape(-1, 3))
    cdef Py_ssize_t n = db.shape[0], m = db.shape[1]
    cdef Py_ssize_t i, k, a
    cdef double s2 = sqrt(2.0) * noise_mult
    cdef double nm2 = noise_mult * noise_mult
    cdef double h[3], xi[3], cr[3], d[3]
    cdef double dot, nrm, t

    out_arr = np.empty((n, m + 1, 3)) if store else np.empty((n, 3))
    cdef double[:, :, ::1] paths
    cdef double[:, ::1] finals
    if store:
        paths = out_arr
    else:
        finals = out_arr

    for i in range(n):
        for a in range(3):
            xi[a] = x0[i, a]
        if store:
            for a in range(3):
                paths[i, 0, a] = xi[a]
        for k in range(m):
            t = t0 + k * dt
            _poly_eval(pc, t, h)
            for a in range(3):
                d[a] = db[i, k, a]
            dot = xi[0] * h[0] + xi[1] * h[1] + xi[2] * h[2]
            _cross(xi, d, cr)
            for a in range(3):
                xi[a] = xi[a] + (drift_mult * (h[a] - dot * xi[a])
                                 - 2.0 * nm2 * xi[a]) * dt + s2 * cr[a]
            nrm = sqrt(xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2])
            for a in range(3):
                xi[a] /= nrm
            if store:
                for a in range(3):
                    paths[i, k + 1, a] = xi[a]
        if not store:
            for a in range(3):
                finals[i, a] = xi[a]
    return out_arr


def pair_strain(centers, mats):
    """Deviatoric strain (n, 5) at every center from all other singularities."""
    cdef double[:, ::1] c = np.ascontiguousarray(centers, dtype=np.float64)
    cdef double[:, :, ::1] mm = np.ascontiguousarray(mats, dtype=np.float64)
    cdef Py_ssize_t n = c.shape[0]
    cdef Py_ssize_t i, j, a, b, g, e
    cdef double x[3]
    cdef double grad[3][3]
    cdef double hess
    cdef double r2, r, r3, r5, r7, tr
    cdef double pi8 = 8.0 * np.pi

    out_arr = np.zeros((n, 5))
    cdef double[:, ::1] out = out_arr

    for i in range(n):
        for a in range(3):
            for e in range(3):
                grad[a][e] = 0.0
        for j in range(n):
            if j == i:
                continue
            for a in range(3):
                x[a] = c[i, a] - c[j, a]
            r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2]
            r = sqrt(r2)
            r3 = r * r2
            r5 = r3 * r2
            r7 = r5 * r2
            # grad[a][e] += sum_{g,b} M_{gb} d_e d_b Phi_{ag}(x)
            for a in range(3):
                for e in range(3):
                    for g in range(3):
                        for b in range(3):
                            hess = 0.0
                            if a == g:
                                hess -= (1.0 if b == e else 0.0) / r3 - 3.0 * x[b] * x[e] / r5
                            if a == b and g == e:
                                hess += 1.0 / r3
                            if g == b and a == e:
                                hess += 1.0 / r3
                            if a == b:
                                hess -= 3.0 * x[g] * x[e] / r5
                            if g == b:
                                hess -= 3.0 * x[a] * x[e] / r5
                            if a == e:
                                hess -= 3.0 * x[g] * x[b] / r5
                            if g == e:
                                hess -= 3.0 * x[a] * x[b] / r5
                            if b == e:
                                hess -= 3.0 * x[a] * x[g] / r5
                            hess += 15.0 * x[a] * x[g] * x[b] * x[e] / r7
                            grad[a][e] += mm[j, g, b] * hess / pi8
        tr = (grad[0][0] + grad[1][1] + grad[2][2]) / 3.0
        out[i, 0] = grad[0][0] - tr
        out[i, 1] = grad[1][1] - tr
        out[i, 2] = 0.5 * (grad[0][1] + grad[1][0])
        out[i, 3] = 0.5 * (grad[0][2] + grad[2][0])
        out[i, 4] = 0.5 * (grad[1][2] + grad[2][1])
    return out_arr
