# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled pairwise kernels (real-space Ewald sums and Fourier structure factors).

Mirror of :mod:`eulerlimit._fallback`.  The per-particle potential array only
guarantees its total: each unordered pair is charged twice to its lower index.  Each particle's sums are accumulated
by one thread in a fixed j/k order, so results are independent of the
OpenMP thread count.
"""

import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport sqrt, exp, erfc, floor, cos, sin, log, fabs, M_PI, INFINITY

cnp.import_array()

cdef double SQRT_PI = 1.7724538509055159
cdef double EULER_GAMMA = 0.5772156649015329


cdef inline double exp1(double x) noexcept nogil:
    """Exponential integral E1 for x > 0: power series below 1, Lentz continued fraction above."""
    cdef double total, term, b, c, d, h, delta, an
    cdef int k
    if x <= 1.0:
        total = 0.0
        term = 1.0
        for k in range(1, 40):
            term = -term * x / k
            total = total - term / k
            if fabs(term) < 1e-17 * k:
                break
        return total - EULER_GAMMA - log(x)
    b = x + 1.0
    c = 1.0e300
    d = 1.0 / b
    h = d
    for k in range(1, 200):
        an = -(<double>k) * k
        b = b + 2.0
        d = 1.0 / (an * d + b)
        c = b + an / c
        delta = c * d
        h = h * delta
        if fabs(delta - 1.0) < 1e-16:
            break
    return h * exp(-x)


def _exp1(double x):
    return exp1(x)


def real_space_sums(pos, shifts, double alpha, double rc2, bint want_pot):
    cdef const double[:, ::1] x = np.ascontiguousarray(pos, dtype=np.float64)
    cdef const double[:, ::1] sh = np.ascontiguousarray(shifts, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], dim = x.shape[1], ns = sh.shape[0]
    grad_arr = np.zeros((n, dim))
    pot_arr = np.zeros(n)
    min_arr = np.full(n, np.inf)
    arg_arr = np.full(n, -1, dtype=np.int64)
    cdef double[:, ::1] grad = grad_arr
    cdef double[::1] pot = pot_arr
    cdef double[::1] min_r2 = min_arr
    cdef long long[::1] argmin = arg_arr
    cdef Py_ssize_t i, j, s, a
    cdef double d0, d1, d2, y0, y1, y2, r2, r, e, dfr, a2 = alpha * alpha
    cdef double gx, gy, gz, p, best
    cdef long long bestj
    if dim != 2 and dim != 3:
        raise ValueError("dimension must be 2 or 3")
    for i in prange(n, nogil=True, schedule="static"):
        gx = 0.0
        gy = 0.0
        gz = 0.0
        p = 0.0
        best = INFINITY
        bestj = -1
        for j in range(n):
            if j == i:
                continue
            d0 = x[i, 0] - x[j, 0]
            d0 = d0 - floor(d0 + 0.5)
            d1 = x[i, 1] - x[j, 1]
            d1 = d1 - floor(d1 + 0.5)
            if dim == 3:
                d2 = x[i, 2] - x[j, 2]
                d2 = d2 - floor(d2 + 0.5)
            else:
                d2 = 0.0
            r2 = d0 * d0 + d1 * d1 + d2 * d2
            if r2 < best:
                best = r2
                bestj = j
            for s in range(ns):
                y0 = d0 + sh[s, 0]
                y1 = d1 + sh[s, 1]
                if dim == 3:
                    y2 = d2 + sh[s, 2]
                else:
                    y2 = 0.0
                r2 = y0 * y0 + y1 * y1 + y2 * y2
                if r2 >= rc2:
                    continue
                e = exp(-a2 * r2)
                if dim == 2:
                    dfr = -e / (2.0 * M_PI * r2)
                    if want_pot and j > i:
                        p = p + exp1(a2 * r2) / (2.0 * M_PI)
                else:
                    r = sqrt(r2)
                    dfr = -(erfc(alpha * r) / r + 2.0 * alpha / SQRT_PI * e) / (4.0 * M_PI * r2)
                    if want_pot and j > i:
                        p = p + erfc(alpha * r) / (2.0 * M_PI * r)
                gx = gx + dfr * y0
                gy = gy + dfr * y1
                gz = gz + dfr * y2
        grad[i, 0] = gx
        grad[i, 1] = gy
        if dim == 3:
            grad[i, 2] = gz
        pot[i] = p
        min_r2[i] = best
        argmin[i] = bestj
    return grad_arr, pot_arr, min_arr, arg_arr


def fourier_sums(pos, modes, coef, int kmax, bint want_pot, bint want_grad=True):
    cdef const double[:, ::1] x = np.ascontiguousarray(pos, dtype=np.float64)
    cdef const long long[:, ::1] km = np.ascontiguousarray(modes, dtype=np.int64)
    cdef const double[::1] c = np.ascontiguousarray(coef, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], dim = x.shape[1], nm = km.shape[0]
    cdef Py_ssize_t width = 2 * kmax + 1
    grad_arr = np.zeros((n, dim))
    cdef double[:, ::1] grad = grad_arr
    if n == 0 or nm == 0:
        return grad_arr, 0.0
    tc_arr = np.empty((n, dim, width))
    ts_arr = np.empty((n, dim, width))
    cdef double[:, :, ::1] tc = tc_arr
    cdef double[:, :, ::1] ts = ts_arr
    sre_arr = np.zeros(nm)
    sim_arr = np.zeros(nm)
    cdef double[::1] sre = sre_arr
    cdef double[::1] sim = sim_arr
    cdef Py_ssize_t i, a, m, k
    cdef double th, re, im, t, cr, ci, w, gx, gy, gz, pot_total = 0.0

    for i in prange(n, nogil=True, schedule="static"):
        for a in range(dim):
            for m in range(width):
                th = 2.0 * M_PI * (m - kmax) * x[i, a]
                tc[i, a, m] = cos(th)
                ts[i, a, m] = sin(th)

    for k in prange(nm, nogil=True, schedule="static"):
        cr = 0.0
        ci = 0.0
        for i in range(n):
            re = tc[i, 0, km[k, 0] + kmax]
            im = ts[i, 0, km[k, 0] + kmax]
            for a in range(1, dim):
                t = re * tc[i, a, km[k, a] + kmax] - im * ts[i, a, km[k, a] + kmax]
                im = re * ts[i, a, km[k, a] + kmax] + im * tc[i, a, km[k, a] + kmax]
                re = t
            cr = cr + re
            ci = ci + im
        sre[k] = cr
        sim[k] = ci

    for i in prange(n if want_grad else 0, nogil=True, schedule="static"):
        gx = 0.0
        gy = 0.0
        gz = 0.0
        for k in range(nm):
            re = tc[i, 0, km[k, 0] + kmax]
            im = ts[i, 0, km[k, 0] + kmax]
            for a in range(1, dim):
                t = re * tc[i, a, km[k, a] + kmax] - im * ts[i, a, km[k, a] + kmax]
                im = re * ts[i, a, km[k, a] + kmax] + im * tc[i, a, km[k, a] + kmax]
                re = t
            # Im(e^{i theta_i} conj(S_k))
            w = c[k] * (im * sre[k] - re * sim[k])
            gx = gx + w * km[k, 0]
            gy = gy + w * km[k, 1]
            if dim == 3:
                gz = gz + w * km[k, 2]
        grad[i, 0] = -2.0 * M_PI * gx
        grad[i, 1] = -2.0 * M_PI * gy
        if dim == 3:
            grad[i, 2] = -2.0 * M_PI * gz

    if want_pot:
        for k in range(nm):
            pot_total += c[k] * (sre[k] * sre[k] + sim[k] * sim[k] - n)
    return grad_arr, pot_total
