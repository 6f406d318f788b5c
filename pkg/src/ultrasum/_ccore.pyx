# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernel routines (see ``_pycore``)."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, atan2, hypot, ceil, lgamma, sin, cos, sqrt, M_PI

cnp.import_array()

BACKEND = "compiled"

cdef double Y_SWITCH = log(1e15)
cdef double HALF_LOG_2PI = 0.5 * log(2.0 * M_PI)
cdef double PI2_6 = M_PI * M_PI / 6.0

# Bernoulli-type coefficients of the dilogarithm series in u = -log(1-z)
cdef double[10] BF
BF[:] = [-1.0 / 4.0, 1.0 / 36.0, -1.0 / 3600.0, 1.0 / 211680.0,
         -1.0 / 10886400.0, 1.0 / 526901760.0, -4.064761645144225526e-11,
         8.921691020456452555e-13, -1.993929586072107569e-14,
         4.518980029619918192e-16]


cdef inline double complex clog_(double complex z) noexcept nogil:
    return log(hypot(z.real, z.imag)) + 1j * atan2(z.imag, z.real)


cdef inline double complex cexp_(double complex z) noexcept nogil:
    cdef double r = exp(z.real)
    return r * cos(z.imag) + 1j * r * sin(z.imag)


cdef double complex li2(double complex z) noexcept nogil:
    cdef double rz = z.real, iz = z.imag
    cdef double nz = rz * rz + iz * iz
    cdef double complex u, u2, rest = 0.0, lz
    cdef double sgn = 1.0
    if nz < 1e-32:
        return z * (1.0 + 0.25 * z)
    if rz <= 0.5:
        if nz > 1.0:
            lz = clog_(-z)
            u = -clog_(1.0 - 1.0 / z)
            rest = -0.5 * lz * lz - PI2_6
            sgn = -1.0
        else:
            u = -clog_(1.0 - z)
    else:
        if nz <= 2.0 * rz:
            u = -clog_(z)
            rest = u * clog_(1.0 - z) + PI2_6
            sgn = -1.0
        else:
            lz = clog_(-z)
            u = -clog_(1.0 - 1.0 / z)
            rest = -0.5 * lz * lz - PI2_6
            sgn = -1.0
    u2 = u * u
    cdef double complex acc = BF[9]
    cdef int k
    for k in range(8, 1, -1):
        acc = BF[k] + u2 * acc
    # acc now holds the even-power tail starting at BF[2]
    return sgn * (u + u2 * (BF[0] + u * (BF[1] + u2 * acc))) + rest


cdef inline double complex ti2_(double complex x) noexcept nogil:
    return (li2(1j * x) - li2(-1j * x)) / 2j


cdef inline double complex catan_(double complex x) noexcept nogil:
    # principal arctan; only used with Re x > 0
    return 0.5j * (clog_(1.0 - 1j * x) - clog_(1.0 + 1j * x))


def ti2(x):
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] xs = np.ascontiguousarray(
        np.atleast_1d(x), dtype=np.complex128).ravel()
    cdef Py_ssize_t i, n = xs.shape[0]
    out = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] o = out
    for i in range(n):
        o[i] = ti2_(xs[i])
    return out.reshape(np.shape(x))


def direct_sums(ell, log_q):
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] e = np.ascontiguousarray(
        np.atleast_1d(ell), dtype=np.complex128).ravel()
    cdef const double[::1] lq = np.ascontiguousarray(log_q, dtype=float)
    cdef Py_ssize_t i, q, n = e.shape[0], nq = lq.shape[0]
    s2 = np.empty(n, dtype=np.complex128)
    s1 = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] o2 = s2, o1 = s1
    cdef double complex a2, a1, x, base
    with nogil:
        for i in range(n):
            a2 = 0.0
            a1 = 0.0
            base = cexp_(-e[i])
            for q in range(nq):
                x = base * exp(-lq[q])
                a2 = a2 + ti2_(x)
                a1 = a1 + catan_(x)
            o2[i] = a2
            o1[i] = a1
    return s2, s1


cdef double lam_(double y, double P) noexcept nogil:
    cdef double p0, pc, best, val
    cdef int d
    if y >= Y_SWITCH:
        return -exp(y) + 0.5 * y + HALF_LOG_2PI
    p0 = ceil(exp(y)) - 1.0
    if p0 < P:
        p0 = P
    best = 1e308
    for d in range(-1, 2):
        pc = p0 + d
        if pc < P:
            pc = P
        val = lgamma(pc + 1.0) - pc * y
        if val < best:
            best = val
    return best


def log_h_v(v, log_M, log_m, double g, double c, double A0):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] vv = np.ascontiguousarray(
        np.atleast_1d(v), dtype=float).ravel()
    cdef const double[::1] lM = np.ascontiguousarray(log_M, dtype=float)
    cdef const double[::1] lm = np.ascontiguousarray(log_m, dtype=float)
    cdef Py_ssize_t i, n = vv.shape[0], P = lm.shape[0]
    cdef Py_ssize_t lo, hi, mid
    cdef double x
    out = np.empty(n, dtype=float)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            x = vv[i]
            if x <= lm[0]:
                o[i] = 0.0
            elif x <= lm[P - 1]:
                # number of stored quotients strictly below x
                lo = 0
                hi = P
                while lo < hi:
                    mid = (lo + hi) // 2
                    if lm[mid] < x:
                        lo = mid + 1
                    else:
                        hi = mid
                o[i] = lM[lo] - lo * x
            elif g <= 0:
                o[i] = -1.0 / 0.0
            else:
                o[i] = A0 + g * lam_((x - c) / g, <double>P)
    return out.reshape(np.shape(v))
