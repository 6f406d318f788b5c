"""Pure numpy implementation of the hot kernel routines.

Used when the compiled extension is unavailable or when
``ULTRASUM_PURE_PYTHON=1`` is set.  Both implementations expose:

* ``log_h_v(v, log_M, log_m, g, c, A0)``: ``log h(e^{-v})`` for a stored
  table of ``log M_p`` continued by a factorial-power tail model.
* ``direct_sums(ell, log_q)``: for every ``ell`` the sums over ``q`` of
  ``Ti2(x_q)`` and ``arctan(x_q)`` with ``x_q = exp(-ell - log_q[q])``, where
  ``Ti2`` is the inverse tangent integral.
"""

import math

import numpy as np
from scipy.special import gammaln, spence

# beyond this the integer minimiser is replaced by Stirling's form
Y_SWITCH = math.log(1e15)
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_CHUNK = 1 << 20

BACKEND = "python"


def log_h_v(v, log_M, log_m, g, c, A0):
    """Vectorised ``log h(e^{-v})``.

    Parameters
    ----------
    v : array_like
        Points ``v = -log t``.
    log_M, log_m : ndarray
        Stored ``log M_0..log M_P`` and ``log m_0..log m_{P-1}``.
    g, c, A0 : float
        Tail model ``log M_p = A0 + c p + g lgamma(p+1)`` for ``p >= P``.
    """
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape)
    P = log_m.size
    mid = (v > log_m[0]) & (v <= log_m[-1])
    if mid.any():
        vm = v[mid]
        p = np.searchsorted(log_m, vm, side="left")
        out[mid] = log_M[p] - p * vm
    tail = v > log_m[-1]
    if tail.any():
        if g <= 0:
            out[tail] = -np.inf
        else:
            out[tail] = A0 + g * _lam(v[tail], g, c, P)
    return out


def _lam(vt, g, c, P):
    # min over p >= P of lgamma(p+1) - p*y, with y = (v-c)/g
    y = (vt - c) / g
    res = np.empty_like(y)
    small = y < Y_SWITCH
    if small.any():
        ys = y[small]
        p0 = np.maximum(float(P), np.ceil(np.exp(ys)) - 1.0)
        best = np.full(ys.shape, np.inf)
        for d in (-1.0, 0.0, 1.0):
            pc = np.maximum(float(P), p0 + d)
            best = np.minimum(best, gammaln(pc + 1.0) - pc * ys)
        res[small] = best
    big = ~small
    if big.any():
        yb = y[big]
        with np.errstate(over="ignore"):
            res[big] = -np.exp(yb) + 0.5 * yb + HALF_LOG_2PI
    return res


def ti2(x):
    """Inverse tangent integral for complex ``x`` with ``Re x > 0``."""
    x = np.asarray(x, dtype=complex)
    return (spence(1.0 - 1j * x) - spence(1.0 + 1j * x)) / 2j


def direct_sums(ell, log_q):
    ell = np.atleast_1d(np.asarray(ell, dtype=complex))
    log_q = np.asarray(log_q, dtype=float)
    s2 = np.empty(ell.shape, dtype=complex)
    s1 = np.empty(ell.shape, dtype=complex)
    rows = max(1, _CHUNK // max(1, log_q.size))
    for i in range(0, ell.size, rows):
        e = ell[i:i + rows]
        x = np.exp(-e[:, None] - log_q[None, :])
        s2[i:i + rows] = ti2(x).sum(axis=1)
        s1[i:i + rows] = np.arctan(x).sum(axis=1)
    return s2, s1
