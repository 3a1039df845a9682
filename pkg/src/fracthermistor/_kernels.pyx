# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled history-sum kernels.

Same contracts as :mod:`fracthermistor._kernels_py`; see that module for the
cell-moment notation.  Only the nonuniform-grid loops are compiled: on uniform
grids the sums are Toeplitz and ``np.convolve`` is already faster than a
hand-written loop.
"""

import numpy as np

from libc.math cimport exp, log

DEF SERIES_CUTOFF = 0.05

cdef enum:
    SERIES_TERMS = 14


cdef double[:, ::1] _series_coefficients(double mu):
    # With r = d/a:  F1 = a**p1 * sum_j coef[0, j] r**(j+1)
    #              lead = a**p2 * sum_j coef[1, j] r**(j+2)
    # from the binomial series of (1 + r)**p.
    cdef double p1 = mu + 1.0
    cdef double p2 = mu + 2.0
    coef = np.empty((2, SERIES_TERMS))
    cdef double b1 = 1.0  # binom(p1, n) / p1 for n = j + 1
    cdef double b2 = 1.0  # binom(p2, n) / p2
    cdef int j, n
    for j in range(SERIES_TERMS):
        n = j + 1
        coef[0, j] = b1
        b1 *= (p1 - n) / (n + 1)
        b2 *= (p2 - n) / (n + 1)
        coef[1, j] = b2 - b1
    return coef


cdef inline double _pow_p(double x, double p) noexcept nogil:
    if x == 0.0:
        return 0.0
    return exp(p * log(x))


cdef inline void _moments(double a, double d, double mu, double ap1, double bp1,
                          const double *coef, double *left, double *f1) noexcept nogil:
    # ap1 = a**(mu+1), bp1 = (a+d)**(mu+1); the caller carries bp1 over from the
    # neighbouring cell, so each cell costs one exp/log pair.
    cdef double p1 = mu + 1.0
    cdef double p2 = mu + 2.0
    cdef double r, s1, s2, f
    cdef int j
    if a == 0.0:
        f = bp1 / p1
        left[0] = f * p1 / p2
        f1[0] = f
        return
    r = d / a
    if r < SERIES_CUTOFF:
        s1 = coef[SERIES_TERMS - 1]
        s2 = coef[2 * SERIES_TERMS - 1]
        for j in range(SERIES_TERMS - 2, -1, -1):
            s1 = s1 * r + coef[j]
            s2 = s2 * r + coef[SERIES_TERMS + j]
        f = ap1 * s1 * r
        left[0] = ap1 * s2 * r  # lead / d, with a * r = d
    else:
        f = (bp1 - ap1) / p1
        left[0] = ((bp1 * (a + d) - ap1 * a) / p2 - a * f) / d
    f1[0] = f


def product_sums(t, v, double mu, Py_ssize_t k0, Py_ssize_t c_lo, Py_ssize_t c_hi):
    cdef const double[::1] tt = np.ascontiguousarray(t, dtype=np.float64)
    cdef const double[::1] vv = np.ascontiguousarray(v, dtype=np.float64)
    cdef double[:, ::1] coef_mv = _series_coefficients(mu)
    cdef const double *coef = &coef_mv[0, 0]
    cdef Py_ssize_t n = tt.shape[0]
    out_arr = np.zeros(n - k0)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t k, c, hi
    cdef double acc, left, f1, a, ap1, bp1
    cdef double p1 = mu + 1.0
    with nogil:
        for k in range(k0, n):
            hi = c_hi if c_hi < k else k
            acc = 0.0
            if c_lo < hi:
                bp1 = _pow_p(tt[k] - tt[c_lo], p1)
            for c in range(c_lo, hi):
                a = tt[k] - tt[c + 1]
                ap1 = _pow_p(a, p1)
                _moments(a, tt[c + 1] - tt[c], mu, ap1, bp1, coef, &left, &f1)
                acc = acc + left * vv[c] + (f1 - left) * vv[c + 1]
                bp1 = ap1
            out[k - k0] = acc
    return out_arr


def l1_sums(t, q, double mu):
    cdef const double[::1] tt = np.ascontiguousarray(t, dtype=np.float64)
    cdef const double[::1] qq = np.ascontiguousarray(q, dtype=np.float64)
    cdef double[:, ::1] coef_mv = _series_coefficients(mu)
    cdef const double *coef = &coef_mv[0, 0]
    cdef Py_ssize_t n = tt.shape[0]
    out_arr = np.zeros(n)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t k, c
    cdef double acc, left, f1, a, ap1, bp1
    cdef double p1 = mu + 1.0
    with nogil:
        for k in range(1, n):
            acc = 0.0
            bp1 = _pow_p(tt[k] - tt[0], p1)
            for c in range(k):
                a = tt[k] - tt[c + 1]
                ap1 = _pow_p(a, p1)
                _moments(a, tt[c + 1] - tt[c], mu, ap1, bp1, coef, &left, &f1)
                acc = acc + f1 * qq[c]
                bp1 = ap1
            out[k] = acc
    return out_arr
