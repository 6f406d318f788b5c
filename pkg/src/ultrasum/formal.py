"""Truncated power series, formal Borel/Laplace transforms and norm certificates.

Series carry an explicit convention tag:

``plain``
    ``coeffs[p]`` is the coefficient of ``z^p``.
``over-factorial``
    ``coeffs[p]`` is ``lambda_p`` in ``sum lambda_p z^p / p!`` (the
    derivatives at the origin).

Conversions are explicit; nothing is renormalised implicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import (InputError, MomentTableTooShort, OutsideGuard, ZeroSeries)

MAX_ORDER = 512
PLAIN = "plain"
OVER_FACTORIAL = "over-factorial"
_CONVENTIONS = (PLAIN, OVER_FACTORIAL)


@dataclass(frozen=True)
class NormCertificate:
    """``|lambda_p| <= C A^p p! M_p`` for every stored ``p``."""
    C: float
    A: float


@dataclass(frozen=True, eq=False)
class TruncatedSeries:
    coeffs: np.ndarray
    convention: str = PLAIN
    norm_cert: NormCertificate | None = None

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex).ravel()
        if c.size == 0:
            raise InputError("a series needs at least one coefficient")
        if c.size - 1 > MAX_ORDER:
            raise InputError(f"order {c.size - 1} exceeds {MAX_ORDER}")
        if self.convention not in _CONVENTIONS:
            raise InputError(f"unknown convention {self.convention!r}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def N(self):
        return self.coeffs.size - 1

    def log_abs_derivatives(self):
        """``log |lambda_p|`` computed without forming factorials."""
        with np.errstate(divide="ignore"):
            la = np.log(np.abs(self.coeffs))
        if self.convention == PLAIN:
            la = la + gammaln(np.arange(self.N + 1) + 1.0)
        return la

    def to_plain(self):
        if self.convention == PLAIN:
            return self
        f = np.exp(-gammaln(np.arange(self.N + 1) + 1.0))
        return TruncatedSeries(self.coeffs * f, PLAIN, self.norm_cert)

    def to_over_factorial(self):
        if self.convention == OVER_FACTORIAL:
            return self
        f = np.exp(gammaln(np.arange(self.N + 1) + 1.0))
        return TruncatedSeries(self.coeffs * f, OVER_FACTORIAL, self.norm_cert)

    def with_certificate(self, cert):
        return TruncatedSeries(self.coeffs, self.convention, cert)

    def is_zero(self):
        return not np.any(self.coeffs)

    def __add__(self, other):
        if self.convention != other.convention:
            raise InputError("cannot add series with different conventions")
        n = max(self.N, other.N) + 1
        c = np.zeros(n, dtype=complex)
        c[: self.N + 1] += self.coeffs
        c[: other.N + 1] += other.coeffs
        return TruncatedSeries(c, self.convention)

    def scale(self, a):
        return TruncatedSeries(self.coeffs * a, self.convention)

    def to_dict(self):
        return {"convention": self.convention,
                "coeffs": [[float(c.real), float(c.imag)] for c in self.coeffs]}

    @classmethod
    def from_dict(cls, doc):
        try:
            conv = doc.get("convention", PLAIN)
            coeffs = [complex(*pair) if isinstance(pair, (list, tuple)) else complex(pair)
                      for pair in doc["coeffs"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed series document: {exc}") from None
        return cls(np.array(coeffs), conv)


def _moment_values(moments, n):
    m = np.asarray(getattr(moments, "m", moments), dtype=float)
    if m.size < n + 1:
        raise MomentTableTooShort(f"moments cover p <= {m.size - 1}, need {n}")
    if np.any(m[: n + 1] <= 0):
        raise InputError("moments must be positive")
    return m[: n + 1]


def formal_borel(series, moments):
    """Divide the ``z^p`` coefficient by ``m(p)``; the convention is kept."""
    m = _moment_values(moments, series.N)
    c = series.coeffs
    # componentwise, so that exact cancellations stay exact
    return TruncatedSeries(c.real / m + 1j * (c.imag / m), series.convention)


def formal_laplace(series, moments):
    """Multiply the ``z^p`` coefficient by ``m(p)``; the convention is kept."""
    m = _moment_values(moments, series.N)
    c = series.coeffs
    return TruncatedSeries(c.real * m + 1j * (c.imag * m), series.convention)


def certify_norm(series, seq, grid_step=1.0 / 64):
    """Fit ``(C, A)`` with ``|lambda_p| <= C A^p p! M_p`` for the stored ``p``.

    ``C0 = max(1, |lambda_0|)`` normalises the growth rate
    ``A = max(1, max_p (|lambda_p| / (C0 p! M_p))^{1/p})``, which is rounded
    up to the grid ``2^{k grid_step}``; ``C`` is then the exact supremum for
    that ``A``.  The certificate is re-checked before returning.
    """
    if series.is_zero():
        raise ZeroSeries("cannot certify the zero series")
    la = series.log_abs_derivatives()
    p = np.arange(series.N + 1)
    base = la - gammaln(p + 1.0) - seq.log_M(p)
    logC0 = max(0.0, float(base[0]) if np.isfinite(base[0]) else 0.0)
    if series.N >= 1:
        rates = (base[1:] - logC0) / p[1:]
        logA = max(0.0, float(np.max(rates[np.isfinite(rates)], initial=0.0)))
    else:
        logA = 0.0
    step = grid_step * math.log(2.0)
    logA = math.ceil(logA / step - 1e-12) * step
    fin = np.isfinite(base)
    logC = float(np.max(base[fin] - p[fin] * logA))
    cert = NormCertificate(math.exp(logC), math.exp(logA))
    if not check_certificate(series, seq, cert):
        cert = NormCertificate(cert.C * (1 + 1e-12), cert.A)
    return cert


def check_certificate(series, seq, cert, slack=1e-12):
    """Exact re-check of a norm certificate (log domain, relative slack)."""
    if cert is None:
        return False
    la = series.log_abs_derivatives()
    p = np.arange(series.N + 1)
    bound = math.log(cert.C) + p * math.log(cert.A) + gammaln(p + 1.0) + seq.log_M(p)
    fin = np.isfinite(la)
    return bool(np.all(la[fin] <= bound[fin] + math.log1p(slack) * np.maximum(1.0, np.abs(bound[fin]))))


def eval_truncated(series, z, radius_guard=math.inf):
    """Horner evaluation of ``sum a_p z^p`` (plain coefficients)."""
    z = np.asarray(z, dtype=complex)
    if np.any(np.abs(z) > radius_guard):
        raise OutsideGuard(f"|z| exceeds the guard radius {radius_guard}")
    c = series.to_plain().coeffs
    acc = np.zeros(z.shape, dtype=complex) + c[-1]
    for a in c[-2::-1]:
        acc = acc * z + a
    return complex(acc) if acc.ndim == 0 else acc
