# cython: language_level=3
"""Compiled twins of the functions in ``_pykernels``; same signatures and semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()


cdef inline void _theta(double[::1] theta, double* out) noexcept:
    cdef Py_ssize_t k
    for k in range(5):
        out[k] = 0.0
    for k in range(theta.shape[0]):
        out[k] = theta[k]


def nll_and_grad(l, q, theta, double log_var_floor):
    cdef double[::1] lv = np.ascontiguousarray(l, dtype=np.float64)
    cdef double[::1] qv = np.ascontiguousarray(q, dtype=np.float64)
    cdef double[::1] tv = np.ascontiguousarray(theta, dtype=np.float64)
    cdef Py_ssize_t n = lv.shape[0], i, p = tv.shape[0]
    if qv.shape[0] != n:
        raise ValueError("l and q must have the same length")
    if p != 4 and p != 5:
        raise ValueError("theta must have 4 or 5 entries")
    cdef double t[5]
    _theta(tv, t)
    cdef double a = t[0], b = t[1], alpha = t[2], beta = t[3], a2 = t[4]
    cdef double qi, mu, s, r, w, rw, h, ds
    cdef double value = 0.0, ga = 0.0, gb = 0.0, gal = 0.0, gbe = 0.0, ga2 = 0.0
    cdef bint clamped
    with nogil:
        for i in range(n):
            qi = qv[i]
            mu = a * qi + b + a2 * qi * qi
            s = alpha * qi + beta
            clamped = s < log_var_floor
            if clamped:
                s = log_var_floor
            r = lv[i] - mu
            w = exp(-s)
            rw = r * w
            h = 0.5 * r * rw
            value += 0.5 * s + h
            ga -= rw * qi
            gb -= rw
            ga2 -= rw * qi * qi
            if not clamped:
                ds = 0.5 - h
                gal += ds * qi
                gbe += ds
    grad = np.empty(p)
    grad[0] = ga
    grad[1] = gb
    grad[2] = gal
    grad[3] = gbe
    if p == 5:
        grad[4] = ga2
    return value, grad


def corrected_logits(l, q, theta_real, theta_fake, double log_var_floor):
    cdef double[::1] lv = np.ascontiguousarray(l, dtype=np.float64)
    cdef double[::1] qv = np.ascontiguousarray(q, dtype=np.float64)
    cdef double[::1] t0v = np.ascontiguousarray(theta_real, dtype=np.float64)
    cdef double[::1] t1v = np.ascontiguousarray(theta_fake, dtype=np.float64)
    cdef Py_ssize_t n = lv.shape[0], i
    if qv.shape[0] != n:
        raise ValueError("l and q must have the same length")
    cdef double c0[5]
    cdef double c1[5]
    _theta(t0v, c0)
    _theta(t1v, c1)
    out = np.empty(n)
    cdef double[::1] ov = out
    cdef double qi, mu0, mu1, s0, s1, d0, d1
    with nogil:
        for i in range(n):
            qi = qv[i]
            mu0 = c0[0] * qi + c0[1] + c0[4] * qi * qi
            mu1 = c1[0] * qi + c1[1] + c1[4] * qi * qi
            s0 = c0[2] * qi + c0[3]
            s1 = c1[2] * qi + c1[3]
            if s0 < log_var_floor:
                s0 = log_var_floor
            if s1 < log_var_floor:
                s1 = log_var_floor
            d0 = lv[i] - mu0
            d1 = lv[i] - mu1
            ov[i] = 0.5 * d0 * d0 * exp(-s0) - 0.5 * d1 * d1 * exp(-s1) + 0.5 * (s0 - s1)
    return out
