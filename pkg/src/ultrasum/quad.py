"""Adaptive quadrature for complex-valued integrands.

Finite intervals use a globally adaptive Gauss-Kronrod 10/21 scheme with
vectorised integrand calls.  Endpoint singularities are handled by an
exponential substitution, and ray integrals are truncated where a caller
supplied envelope certifies that the remaining tail is negligible.
"""

from __future__ import annotations

import dataclasses
import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np

from ._gk import NODES, apply_rule
from .errors import (EnvelopeNotSummable, InputError, MaxSubdivisionsExceeded,
                     NonFiniteIntegrand)


class SingularityHint(str, enum.Enum):
    NONE = "none"
    LOG_AT_LEFT = "log_at_left"
    LOG_AT_ZERO_SYMMETRIC = "log_at_zero_symmetric"


@dataclass(frozen=True)
class QuadConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-14
    max_subdivisions: int = 2 ** 15
    singularity_hint: SingularityHint = SingularityHint.NONE
    raise_on_failure: bool = False

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise InputError("quadrature tolerances must be positive")
        if self.max_subdivisions < 8:
            raise InputError("max_subdivisions must be at least 8")
        object.__setattr__(self, "singularity_hint",
                           SingularityHint(self.singularity_hint))

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)

    def to_dict(self):
        return {"rel_tol": self.rel_tol, "abs_tol": self.abs_tol,
                "max_subdivisions": self.max_subdivisions,
                "singularity_hint": self.singularity_hint.value}


@dataclass(frozen=True)
class QuadResult:
    value: complex
    abs_error_estimate: float
    evaluations: int
    truncated_at: float | None = None
    converged: bool = True

    def __add__(self, other):
        return QuadResult(self.value + other.value,
                          self.abs_error_estimate + other.abs_error_estimate,
                          self.evaluations + other.evaluations,
                          other.truncated_at or self.truncated_at,
                          self.converged and other.converged)


def _call(f, x):
    y = np.asarray(f(x), dtype=complex)
    if y.shape != x.shape:
        y = np.broadcast_to(y, x.shape).astype(complex)
    bad = ~np.isfinite(y)
    if bad.any():
        raise NonFiniteIntegrand(x.ravel()[np.flatnonzero(bad.ravel())[0]])
    return y


def _panels(fx, lo, hi):
    centre = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    x = centre[:, None] + half[:, None] * NODES[None, :]
    vals = fx(x)
    res, err = apply_rule(vals, half)
    return res, err


def _adaptive(fx, a, b, cfg, abs_tol=None, rel_tol=None):
    """Globally adaptive GK21 on ``[a, b]``; ``fx`` maps node arrays to values."""
    abs_tol = cfg.abs_tol if abs_tol is None else abs_tol
    rel_tol = cfg.rel_tol if rel_tol is None else rel_tol
    lo = np.array([a], dtype=float)
    hi = np.array([b], dtype=float)
    res, err = _panels(fx, lo, hi)
    neval = 21
    converged = False
    while True:
        total = res.sum()
        etot = err.sum()
        if etot <= max(abs_tol, rel_tol * abs(total)):
            converged = True
            break
        if lo.size >= cfg.max_subdivisions:
            break
        splittable = (hi - lo) > 8 * np.finfo(float).eps * np.maximum(
            np.abs(lo), np.abs(hi)) + 1e-300
        cand = np.flatnonzero(splittable)
        if cand.size == 0:
            break
        emax = err[cand].max()
        pick = cand[err[cand] >= 0.25 * emax]
        room = max(1, (cfg.max_subdivisions - lo.size))
        if pick.size > min(64, room):
            pick = pick[np.argsort(err[pick])[-min(64, room):]]
        mid = 0.5 * (lo[pick] + hi[pick])
        nlo = np.concatenate([lo[pick], mid])
        nhi = np.concatenate([mid, hi[pick]])
        nres, nerr = _panels(fx, nlo, nhi)
        neval += 21 * nlo.size
        keep = np.ones(lo.size, dtype=bool)
        keep[pick] = False
        lo = np.concatenate([lo[keep], nlo])
        hi = np.concatenate([hi[keep], nhi])
        res = np.concatenate([res[keep], nres])
        err = np.concatenate([err[keep], nerr])
    # compensated sum of the panel contributions
    value = complex(math.fsum(res.real), math.fsum(res.imag))
    return value, float(err.sum()), neval, converged


def _finish(value, err, neval, converged, cfg, truncated_at=None):
    out = QuadResult(value, err, neval, truncated_at, converged)
    if not converged:
        if cfg.raise_on_failure:
            raise MaxSubdivisionsExceeded(out)
        warnings.warn(f"quadrature did not reach tolerance (error {err:.3g})",
                      RuntimeWarning, stacklevel=3)
    return out


def _log_left(f, a, b):
    # t = a + (b-a) exp(-u), u = x/(1-x): maps x in [0,1) onto (a, b]
    width = b - a

    def fx(x):
        with np.errstate(divide="ignore", over="ignore"):
            om = 1.0 - x
            u = x / om
            w = np.exp(-u)
            jac = width * w / (om * om)
        out = np.zeros(x.shape, dtype=complex)
        ok = (w > 0) & np.isfinite(jac)
        if ok.any():
            t = a + width * w[ok]
            out[ok] = _call(f, t) * jac[ok]
        return out
    return fx


def integrate_finite(f, a, b, cfg=None, **tol):
    """Integrate ``f`` over ``[a, b]``.

    Parameters
    ----------
    f : callable
        Vectorised integrand, called with float arrays.
    a, b : float
        Interval with ``a < b``.
    cfg : QuadConfig, optional
        ``singularity_hint`` selects the substitution: LOG_AT_LEFT maps
        ``t = a + (b-a) e^{-u}``; LOG_AT_ZERO_SYMMETRIC splits at 0 and
        applies it on both halves.
    """
    cfg = cfg or QuadConfig()
    a, b = float(a), float(b)
    if not a < b:
        raise InputError(f"need a < b, got [{a}, {b}]")
    hint = cfg.singularity_hint
    if hint is SingularityHint.NONE:
        out = _adaptive(lambda x: _call(f, x), a, b, cfg, **tol)
    elif hint is SingularityHint.LOG_AT_LEFT:
        out = _adaptive(_log_left(f, a, b), 0.0, 1.0, cfg, **tol)
    else:
        if not a < 0 < b:
            raise InputError("symmetric hint needs a < 0 < b")
        right = _adaptive(_log_left(f, 0.0, b), 0.0, 1.0, cfg, **tol)
        left = _adaptive(_log_left(lambda s: f(-s), 0.0, -a), 0.0, 1.0, cfg, **tol)
        out = (right[0] + left[0], right[1] + left[1], right[2] + left[2],
               right[3] and left[3])
    return _finish(*out, cfg)


def integrate_semi_infinite(f, a, cfg=None):
    """Integrate ``f`` over ``[a, inf)`` via ``t = a + x/(1-x)``."""
    cfg = cfg or QuadConfig()

    def fx(x):
        with np.errstate(divide="ignore"):
            om = 1.0 - x
            t = a + x / om
            jac = 1.0 / (om * om)
        out = np.zeros(x.shape, dtype=complex)
        ok = np.isfinite(t) & np.isfinite(jac)
        out[ok] = _call(f, t[ok]) * jac[ok]
        return out
    return _finish(*_adaptive(fx, 0.0, 1.0, cfg), cfg)


def tail_bound(envelope, R, ceiling=1e300):
    """Upper bound for ``int_R^inf envelope`` assuming it is nonincreasing.

    Sums ``envelope(2^k R) 2^k R`` over dyadic blocks; returns ``inf`` when
    the blocks do not become negligible before ``ceiling``.
    """
    total = 0.0
    r = float(R)
    while r < ceiling:
        e = float(envelope(r))
        if not math.isfinite(e):
            return math.inf
        term = e * r
        total += term
        if term == 0.0 or term <= 1e-17 * total:
            return total
        r *= 2.0
    return math.inf


def integrate_ray(f, tau, decay_bound, cfg=None, r_start=1.0, r_ceiling=1e15):
    """Integrate ``f(u) du`` along the ray ``u = r e^{i tau}``, ``r > 0``.

    Parameters
    ----------
    f : callable
        Vectorised integrand accepting complex arrays.
    tau : float
        Direction of the ray in radians.
    decay_bound : callable
        Nonincreasing envelope ``r -> B(r) >= |f(r e^{i tau})|`` for large r.
    cfg : QuadConfig, optional
        ``singularity_hint`` applies to the first panel ``[0, r_start]``.
    r_start : float
        Length scale of the first panel.

    Returns
    -------
    QuadResult
        ``truncated_at`` is the radius ``R*`` beyond which the envelope
        certifies the tail; the tail bound is included in the error.
    """
    cfg = cfg or QuadConfig()
    rot = complex(math.cos(tau), math.sin(tau))

    def g(r):
        return f(r * rot) * rot

    first_cfg = cfg
    if cfg.singularity_hint is SingularityHint.LOG_AT_ZERO_SYMMETRIC:
        first_cfg = cfg.replace(singularity_hint=SingularityHint.LOG_AT_LEFT)
    R = float(r_start)
    acc = integrate_finite(g, 0.0, R, first_cfg)
    plain = cfg.replace(singularity_hint=SingularityHint.NONE)
    for _ in range(4):
        target = 0.5 * max(cfg.abs_tol, cfg.rel_tol * abs(acc.value))
        R_new = R
        tail = tail_bound(decay_bound, R_new)
        while tail > target:
            R_new *= 2.0
            if R_new > r_ceiling:
                raise EnvelopeNotSummable(
                    f"ray envelope not below {target:.3g} before r={r_ceiling:g}")
            tail = tail_bound(decay_bound, R_new)
        if R_new > R:
            acc = acc + integrate_finite(g, R, R_new, plain)
            R = R_new
            continue
        break
    out = QuadResult(acc.value, acc.abs_error_estimate + tail, acc.evaluations,
                     R, acc.converged)
    return out
