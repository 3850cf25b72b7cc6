# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: language_level=3
"""Compiled versions of the numeric hot paths (see _kernels_py for docs).

Loops are fused and allocation-free per EM iteration; summation order
matches the NumPy kernels up to BLAS reduction order.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, sqrt, tanh

cnp.import_array()

BACKEND_NAME = "compiled"


cdef inline double _lam(double xi) nogil:
    if fabs(xi) <= 1e-6:
        return 0.125
    return tanh(0.5 * xi) / (4.0 * xi)


def rbf_features(points, centers, double gamma):
    cdef double[:, ::1] p = np.ascontiguousarray(points, dtype=np.float64)
    cdef double[:, ::1] c = np.ascontiguousarray(centers, dtype=np.float64)
    cdef Py_ssize_t n = p.shape[0]
    cdef Py_ssize_t m = c.shape[0]
    out_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double dx, dy, dz, d2
    cdef double arg
    with nogil:
        for i in range(n):
            for j in range(m):
                dx = p[i, 0] - c[j, 0]
                dy = p[i, 1] - c[j, 1]
                dz = p[i, 2] - c[j, 2]
                d2 = (dx * dx + dy * dy) + dz * dz
                arg = gamma * d2
                # flush the subnormal tail (see _kernels_py); the
                # comparison is written so NaN propagates through exp
                out[i, j] = 0.0 if arg > 700.0 else exp(-arg)
    return out_arr


def em_fit(phi, y, mu0, sigma0, double tol, int max_iter):
    cdef double[:, ::1] f = np.ascontiguousarray(phi, dtype=np.float64)
    cdef double[::1] t = np.ascontiguousarray(y, dtype=np.float64)
    cdef double[::1] m0 = np.ascontiguousarray(mu0, dtype=np.float64)
    cdef double[::1] s0 = np.ascontiguousarray(sigma0, dtype=np.float64)
    cdef Py_ssize_t n = f.shape[0]
    cdef Py_ssize_t m = f.shape[1]

    mu_arr = np.empty(m, dtype=np.float64)
    sigma_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] mu = mu_arr
    cdef double[::1] sigma = sigma_arr
    b_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] b = b_arr
    xi_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] xi = xi_arr
    lam_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] lam = lam_arr

    cdef Py_ssize_t i, j
    cdef int it, iters = 0
    cdef double acc, quad, lin, delta, xi_new, w

    with nogil:
        # b_j = mu0_j / sigma0_j + sum_i (y_i - 1/2) phi_ij
        for j in range(m):
            b[j] = m0[j] / s0[j]
        for i in range(n):
            w = t[i] - 0.5
            for j in range(m):
                b[j] += w * f[i, j]

        # xi starts at zero: tightest bound, lambda = 1/8 (see _kernels_py).
        for i in range(n):
            xi[i] = 0.0

        for it in range(1, max_iter + 1):
            iters = it
            for i in range(n):
                lam[i] = _lam(xi[i])
            # accumulate row-major: sigma holds the data precision term
            for j in range(m):
                sigma[j] = 0.0
            for i in range(n):
                w = 2.0 * lam[i]
                for j in range(m):
                    sigma[j] += w * f[i, j] * f[i, j]
            for j in range(m):
                sigma[j] = 1.0 / (1.0 / s0[j] + sigma[j])
                mu[j] = sigma[j] * b[j]
            delta = 0.0
            for i in range(n):
                quad = 0.0
                lin = 0.0
                for j in range(m):
                    quad += f[i, j] * f[i, j] * sigma[j]
                    lin += f[i, j] * mu[j]
                xi_new = sqrt(quad + lin * lin)
                if fabs(xi_new - xi[i]) > delta:
                    delta = fabs(xi_new - xi[i])
                xi[i] = xi_new
            if delta < tol:
                break

    return mu_arr, sigma_arr, iters
