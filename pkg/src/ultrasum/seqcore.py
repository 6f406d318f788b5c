"""Sequences of positive reals, regularity certificates and ``h_M``.

All sequences are stored through ``log M_p``.  Linear values are produced
on demand and raise :class:`OverflowAtIndex` when they do not fit in a
double.  Beyond the stored range the quotients are continued by a power
law ``m_q = m_{P-1} ((q+1)/P)^g``, which is exact for Gevrey sequences.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import gammaln

from . import _core
from .errors import (InputError, M0NotOne, NegativeArgument, NonPositiveEntry,
                     OverflowAtIndex, TableTooShort, WindowTooSmall)

DEFAULT_SLACK = 1e-12


@dataclass(frozen=True)
class GevreyAlpha:
    """Gevrey sequence ``M_p = (p!)^alpha``."""
    alpha: float

    def __post_init__(self):
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise InputError(f"alpha must be a positive real, got {self.alpha}")


@dataclass(frozen=True)
class ExplicitTable:
    """User supplied values ``M_0..M_P``."""
    values: tuple


@dataclass(frozen=True, eq=False)
class SequenceModel:
    """Immutable log-domain representation of a positive sequence.

    Attributes
    ----------
    source : GevreyAlpha or ExplicitTable
    pmax : int
        Index ``P`` of the last stored value.
    log_values : ndarray
        ``log M_0..log M_P`` (read-only).
    tail_slope : float
        Exponent ``g`` of the quotient tail model.
    gamma_override : float, optional
        User asserted growth index.
    exponent : float
        ``s`` when the model represents ``M^s`` (1 otherwise).
    """
    source: object
    pmax: int
    log_values: np.ndarray = field(repr=False)
    tail_slope: float
    gamma_override: float | None = None
    exponent: float = 1.0

    @property
    def log_quotients(self):
        return np.diff(self.log_values)

    @property
    def values(self):
        return _linear(self.log_values)

    @property
    def quotients(self):
        return _linear(self.log_quotients)

    @property
    def is_gevrey(self):
        return isinstance(self.source, GevreyAlpha)

    def tail_params(self):
        """Return ``(g, c, A0)`` with ``log M_p = A0 + c p + g lgamma(p+1)``
        for ``p >= pmax``."""
        P = self.pmax
        g = self.tail_slope
        c = self.log_quotients[-1] - g * math.log(P)
        A0 = self.log_values[-1] - c * P - g * math.lgamma(P + 1)
        return g, c, A0

    def log_M(self, p):
        """``log M_p`` for integer (or real) ``p >= 0``, extended past pmax."""
        p = np.asarray(p, dtype=float)
        out = np.empty(p.shape)
        inside = p <= self.pmax
        out[inside] = self.log_values[p[inside].astype(int)]
        if (~inside).any():
            g, c, A0 = self.tail_params()
            q = p[~inside]
            out[~inside] = A0 + c * q + g * gammaln(q + 1.0)
        return out if out.ndim else float(out)

    def log_m(self, q):
        """``log m_q`` extended past the stored range by the tail model."""
        q = np.asarray(q, dtype=float)
        lq = self.log_quotients
        out = np.empty(q.shape)
        inside = q < self.pmax
        out[inside] = lq[q[inside].astype(int)]
        if (~inside).any():
            g, c, _ = self.tail_params()
            out[~inside] = c + g * np.log(q[~inside] + 1.0)
        return out if out.ndim else float(out)

    def power(self, s):
        """The sequence ``M^s`` (same stored range, scaled tail)."""
        if not s > 0:
            raise InputError("exponent must be positive")
        return SequenceModel(self.source, self.pmax, _frozen(s * self.log_values),
                             s * self.tail_slope, self.gamma_override,
                             s * self.exponent)

    def with_gamma(self, gamma):
        return SequenceModel(self.source, self.pmax, self.log_values,
                             self.tail_slope, gamma, self.exponent)

    def digest(self):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.log_values).tobytes())
        h.update(repr((self.tail_slope, self.exponent)).encode())
        return h.hexdigest()[:16]

    def describe(self):
        if isinstance(self.source, GevreyAlpha):
            return {"kind": "gevrey", "alpha": self.source.alpha, "pmax": self.pmax}
        return {"kind": "table", "pmax": self.pmax}


class HValue(NamedTuple):
    value: float
    truncated: bool


class GammaEstimate(NamedTuple):
    gamma: float
    method: str


class RhoFit(NamedTuple):
    rho_fitted: float
    passed: bool


@dataclass(frozen=True)
class RegularityReport:
    logconvex_pass: bool
    moderate_growth: dict
    strong_nq: dict
    gamma_estimate: float | None
    gamma_method: str | None
    watson: dict

    @property
    def strongly_regular(self):
        return (self.logconvex_pass and self.moderate_growth["pass"]
                and self.strong_nq["pass"] is True)

    def flat(self):
        """Flat key/value form used in the JSON report."""
        out = {"logconvex_pass": self.logconvex_pass,
               "gamma_estimate": self.gamma_estimate,
               "gamma_method": self.gamma_method}
        for name in ("moderate_growth", "strong_nq", "watson"):
            for k, v in getattr(self, name).items():
                out[f"{name}.{k}"] = v
        return out


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _linear(logs):
    with np.errstate(over="ignore"):
        vals = np.exp(logs)
    bad = np.flatnonzero(~np.isfinite(vals))
    if bad.size:
        raise OverflowAtIndex(int(bad[0]))
    return vals


def _median_slope(log_y, lo, hi):
    # median of local slopes of log_y[p] against log(p+1) for lo <= p < hi
    p = np.arange(lo, hi)
    dy = log_y[p + 1] - log_y[p]
    dx = np.log(p + 2.0) - np.log(p + 1.0)
    return float(np.median(dy / dx))


def build_sequence(source, pmax, gamma_override=None):
    """Build a :class:`SequenceModel`.

    Parameters
    ----------
    source : GevreyAlpha or ExplicitTable
    pmax : int
        Last stored index, at least 2.
    gamma_override : float, optional
        Asserted growth index, returned verbatim by :func:`estimate_gamma`.
    """
    pmax = int(pmax)
    if pmax < 2:
        raise TableTooShort("pmax must be at least 2")
    if gamma_override is not None and not gamma_override > 0:
        raise InputError("gamma override must be positive")
    if isinstance(source, GevreyAlpha):
        p = np.arange(pmax + 1, dtype=float)
        logs = source.alpha * gammaln(p + 1.0)
        return SequenceModel(source, pmax, _frozen(logs), float(source.alpha),
                             gamma_override)
    if not isinstance(source, ExplicitTable):
        raise InputError(f"unknown sequence source {source!r}")
    vals = np.asarray(source.values, dtype=float)
    if vals.size < pmax + 1:
        raise TableTooShort(f"table has {vals.size} values, need {pmax + 1}")
    vals = vals[:pmax + 1]
    bad = np.flatnonzero(~(vals > 0) | ~np.isfinite(vals))
    if bad.size:
        raise NonPositiveEntry(f"entry {int(bad[0])} is not a positive finite number")
    if vals[0] != 1.0:
        raise M0NotOne(f"M_0 must be 1, got {vals[0]}")
    logs = np.log(vals)
    lq = np.diff(logs)
    if pmax >= 4:
        slope = _median_slope(lq, pmax // 2, pmax - 1) if pmax - 1 > pmax // 2 else 0.0
    else:
        slope = 0.0
    return SequenceModel(source, pmax, _frozen(logs), max(slope, 0.0),
                         gamma_override)


# ---------------------------------------------------------------- h_M

def log_h(seq, t):
    """``log h_M(t)`` for ``t >= 0`` using the extended sequence.

    Vectorised; ``t = 0`` gives ``-inf``.
    """
    t = np.asarray(t, dtype=float)
    if (t < 0).any():
        raise NegativeArgument("h_M is defined for t >= 0")
    g, c, A0 = seq.tail_params()
    with np.errstate(divide="ignore"):
        v = -np.log(t)
    out = np.full(t.shape, -np.inf)
    ok = t > 0
    if ok.any():
        out[ok] = _core.log_h_v(v[ok], seq.log_values, seq.log_quotients, g, c, A0)
    return out if out.ndim else float(out)


def eval_h(seq, t):
    """Evaluate ``h_M(t) = inf_p M_p t^p`` from the stored values.

    Returns
    -------
    HValue
        ``value`` in [0, 1] and ``truncated``, set when ``t`` lies below the
        last stored breakpoint so that the infimum only runs over stored p.
    """
    t = float(t)
    if t < 0 or math.isnan(t):
        raise NegativeArgument(f"h_M needs t >= 0, got {t}")
    if t == 0:
        return HValue(0.0, False)
    lq = seq.log_quotients
    logs = seq.log_values
    lt = math.log(t)
    monotone = bool(np.all(np.diff(lq) >= 0))
    if monotone and -lt <= lq[-1]:
        if -lt <= lq[0]:
            return HValue(1.0, False)
        # left-closed pieces [1/m_p, 1/m_{p-1})
        p = int(np.searchsorted(lq, -lt, side="left"))
        return HValue(math.exp(logs[p] + p * lt), False)
    vals = logs + np.arange(logs.size) * lt
    return HValue(math.exp(float(vals.min())), True)


# ----------------------------------------------------------- certificates

def _logconvex(logs, slack):
    tol = math.log1p(slack)
    lhs = 2.0 * logs[1:-1]
    rhs = logs[:-2] + logs[2:] + tol * np.maximum(1.0, np.abs(lhs))
    return bool(np.all(lhs <= rhs))


def _moderate_growth_ratios(logs):
    # a_n = max_{0<=p<=n} (log M_n - log M_p - log M_{n-p}) / n
    P = logs.size - 1
    a = np.zeros(P + 1)
    for n in range(1, P + 1):
        p = np.arange(n + 1)
        a[n] = np.max(logs[n] - logs[p] - logs[n - p]) / n
    return a


def _grid_ceil(x, step=1e-3):
    # smallest value exp(k*log(1+step)) >= x, x >= 1
    if x <= 1.0:
        return 1.0
    k = math.ceil(math.log(x) / math.log1p(step) - 1e-9)
    val = math.exp(k * math.log1p(step))
    while val < x:
        k += 1
        val = math.exp(k * math.log1p(step))
    return val


def check_regularity(seq, tail_depth=None, slack=DEFAULT_SLACK):
    """Numerically certify log-convexity, moderate growth and (gamma_1).

    Parameters
    ----------
    seq : SequenceModel
    tail_depth : int, optional
        Largest ``p`` at which the strong non-quasianalyticity inequality is
        checked; defaults to ``pmax // 4`` and must not exceed ``pmax - 2``.
    slack : float
        Relative slack for the inequality certificates.
    """
    P = seq.pmax
    if tail_depth is None:
        tail_depth = max(1, P // 4)
    if not 0 <= tail_depth <= P - 2:
        raise InputError(f"tail_depth must lie in [0, {P - 2}]")
    logs = seq.log_values
    lc = _logconvex(logs, slack)

    a = _moderate_growth_ratios(logs)
    logA = float(a.max())
    half = float(a[: P // 2 + 1].max())
    # the ratio must settle: a geometric-type blow up (e.g. exp(p^2)) fails
    mg_pass = logA <= 1.1 * half + 1e-9
    fitted_A = _grid_ceil(math.exp(logA) * (1.0 + slack))

    snq = _strong_nq(seq, tail_depth)

    try:
        ge = estimate_gamma(seq)
        gamma, method = ge.gamma, ge.method
    except WindowTooSmall:
        gamma, method = None, None
    if gamma is not None and gamma > 0:
        wat = watson_diagnostic(seq, gamma)._asdict()
    else:
        wat = {"gamma_used": gamma, "verdict": "Inconclusive",
               "partial_sum": float("nan"), "terms": 0}
    return RegularityReport(lc, {"pass": bool(mg_pass), "fitted_A": fitted_A},
                            snq, gamma, method, wat)


def _strong_nq(seq, depth):
    P = seq.pmax
    lq = seq.log_quotients
    ell = np.arange(P)
    log_t = -lq - np.log(ell + 1.0)          # M_l / ((l+1) M_{l+1})
    t = np.exp(log_t)
    S = np.cumsum(t[::-1])[::-1]             # S_p = sum_{l=p}^{P-1} t_l
    p = np.arange(depth + 1)
    B_fit = float(np.max(np.exp(lq[p] + np.log(S[p]))))
    # tail exponent of t_l ~ l^{-q}
    lo = P // 2
    q = _median_slope(-log_t, lo, P - 1) if P - 1 > lo else 0.0
    if q <= 1.0 + 1e-6:
        verdict, ok = "Fail", False
    else:
        R = t[-1] * P / (q - 1.0)
        B_full = float(np.max(np.exp(lq[p] + np.log(S[p] + R))))
        if B_full <= 1.1 * B_fit:
            verdict, ok = "Pass", True
        else:
            verdict, ok = "Inconclusive", None
    return {"pass": ok, "fitted_B": B_fit, "tail_depth": int(depth),
            "verdict": verdict, "tail_exponent": q}


def estimate_gamma(seq):
    """Growth index: the override if present, else the median slope of
    ``log m_p`` against ``log(p+1)`` over ``[pmax/2, pmax-1]``."""
    if seq.gamma_override is not None:
        return GammaEstimate(float(seq.gamma_override), "Override")
    P = seq.pmax
    lo = P // 2
    if P - 1 - lo < 1:
        raise WindowTooSmall(f"pmax={P} leaves no slope window")
    return GammaEstimate(_median_slope(seq.log_quotients, lo, P - 1),
                         "QuotientSlope")


def check_rho_property(seq, s, grid=None, ceiling=1e6, slack=DEFAULT_SLACK):
    """Fit the smallest ``rho`` with ``h(t) <= h(rho t)^s`` on a grid.

    The search runs over ``rho = 2^{k/64}``.  ``grid`` defaults to 200
    log-spaced points in ``[1e-3, 1] / m_0``.
    """
    if s < 1:
        raise InputError("s must be >= 1")
    m0 = math.exp(seq.log_quotients[0])
    if grid is None:
        grid = np.logspace(-3, 0, 200) / m0
    grid = np.asarray(grid, dtype=float)
    lhs = log_h(seq, grid)
    tol = math.log1p(slack)

    def ok(rho):
        rhs = s * log_h(seq, np.minimum(rho * grid, 1e300))
        fin = np.isfinite(lhs)
        good = lhs[fin] <= rhs[fin] + tol * np.maximum(1.0, np.abs(lhs[fin]))
        return bool(np.all(good))

    step = math.log(2.0) / 64
    kmax = int(math.ceil(math.log(ceiling) / step))
    if not ok(math.exp(kmax * step)):
        return RhoFit(float("inf"), False)
    lo, hi = -1, kmax
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(math.exp(mid * step)):
            hi = mid
        else:
            lo = mid
    return RhoFit(math.exp(hi * step), True)


class WatsonRecord(NamedTuple):
    gamma_used: float
    verdict: str
    partial_sum: float
    terms: int


def watson_diagnostic(seq, gamma):
    """Diagnose divergence of ``sum_n (M_n / M_{n+1})^{1/gamma}``.

    The verdict is a numerical diagnostic on the stored range: the tail
    exponent ``q`` of the terms ``~ n^{-q}`` is fitted on ``[P/2, P-1]``;
    ``q <= 1`` with partial sums still growing gives Divergent, ``q`` clearly
    above 1 (or a ratio test below 1) gives Convergent.
    """
    if not gamma > 0:
        raise InputError("gamma must be positive")
    P = seq.pmax
    log_T = -seq.log_quotients / gamma
    with np.errstate(over="ignore"):
        T = np.exp(log_T)
        S = np.cumsum(T)
    lo = P // 2
    q = _median_slope(-log_T, lo, P - 1) if P - 1 > lo else float("nan")
    n = np.arange(lo, P)
    with np.errstate(over="ignore"):
        ratio = float(np.median(np.exp(log_T[n[1:]] - log_T[n[:-1]]))) if n.size > 1 else 1.0
    verdict = "Inconclusive"
    if not np.isfinite(S[-1]):
        # terms overflow: they cannot tend to zero
        verdict = "Divergent"
    elif q <= 1.0 + 1e-6:
        # partial sums against log N on the window
        c = np.polyfit(np.log(n + 1.0), S[n], 1)[0] if n.size >= 2 else 0.0
        tail = n[n.size // 2:]
        late = np.polyfit(np.log(tail + 1.0), S[tail], 1)[0] if tail.size >= 2 else c
        if c > 0 and late >= 0.5 * c:
            verdict = "Divergent"
    elif q >= 1.05 or ratio < 1.0 - 1e-3:
        verdict = "Convergent"
    return WatsonRecord(float(gamma), verdict, float(S[-1]), int(P))


def sequence_from_spec(doc, pmax=None):
    """Build a sequence from a spec document.

    Fields: ``kind`` ("gevrey" or "table"), ``alpha`` or ``values``,
    ``pmax`` and an optional ``gamma``.  An explicit ``pmax`` argument wins
    over the document.
    """
    if not isinstance(doc, dict):
        raise InputError("sequence spec must be a JSON object")
    kind = doc.get("kind")
    P = pmax if pmax is not None else doc.get("pmax")
    gamma = doc.get("gamma")
    try:
        if kind == "gevrey":
            src = GevreyAlpha(float(doc["alpha"]))
            P = 64 if P is None else P
        elif kind == "table":
            src = ExplicitTable(tuple(float(v) for v in doc["values"]))
            P = len(src.values) - 1 if P is None else P
        else:
            raise InputError(f"unknown sequence kind {kind!r}")
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"malformed sequence spec: {exc}") from None
    return build_sequence(src, int(P), None if gamma is None else float(gamma))
