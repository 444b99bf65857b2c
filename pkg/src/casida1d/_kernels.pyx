# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels (see ``_fallback.py`` for the reference)."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, exp, M_PI

cnp.import_array()


def cn_step(diag, double off, psi, double dt):
    cdef const double[::1] d = np.ascontiguousarray(diag, dtype=np.float64)
    cdef double complex[:, ::1] p = np.ascontiguousarray(psi, dtype=np.complex128)
    cdef Py_ssize_t n = p.shape[0]
    cdef Py_ssize_t m = p.shape[1]
    out_arr = np.empty((n, m), dtype=np.complex128)
    cdef double complex[:, ::1] out = out_arr
    cdef double complex[::1] cp = np.empty(n, dtype=np.complex128)
    cdef double complex c = 0.5j * dt
    cdef double complex lo = c * off
    cdef double complex b, r, w
    cdef Py_ssize_t i, k
    for k in range(m):
        # forward sweep of the Thomas algorithm, rhs built on the fly
        for i in range(n):
            r = p[i, k] - c * d[i] * p[i, k]
            if i > 0:
                r = r - lo * p[i - 1, k]
            if i < n - 1:
                r = r - lo * p[i + 1, k]
            b = 1.0 + c * d[i]
            if i == 0:
                cp[0] = lo / b
                out[0, k] = r / b
            else:
                w = b - lo * cp[i - 1]
                cp[i] = lo / w
                out[i, k] = (r - lo * out[i - 1, k]) / w
        for i in range(n - 2, -1, -1):
            out[i, k] = out[i, k] - cp[i] * out[i + 1, k]
    return out_arr


def soft_coulomb_sum(x, rho, double a, double h):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[::1] rv = np.ascontiguousarray(rho, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double a2 = a * a
    cdef double acc, dx
    cdef Py_ssize_t i, j
    for i in range(n):
        acc = 0.0
        for j in range(n):
            dx = xv[i] - xv[j]
            acc += rv[j] / sqrt(dx * dx + a2)
        out[i] = h * acc
    return out_arr


def gaussian_smooth(energies, weights, points, double s):
    cdef const double[::1] e = np.ascontiguousarray(energies, dtype=np.float64)
    cdef const double[::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef const double[::1] pts = np.ascontiguousarray(np.atleast_1d(points), dtype=np.float64)
    cdef Py_ssize_t m = pts.shape[0]
    cdef Py_ssize_t nk = e.shape[0]
    out_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double norm = 1.0 / (sqrt(2.0 * M_PI) * s)
    cdef double acc, z
    cdef Py_ssize_t i, k
    for i in range(m):
        acc = 0.0
        for k in range(nk):
            z = (pts[i] - e[k]) / s
            if z * z < 1400.0:
                acc += w[k] * exp(-0.5 * z * z)
        out[i] = acc * norm
    return out_arr
