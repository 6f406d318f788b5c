"""Moment function ``m(lambda) = int_0^inf t^{lambda-1} e_M(t) dt``."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, ReLambdaNegative
from .kernel import KernelFlavor, KernelHandle, ensure_sandwich
from .quad import QuadConfig, QuadResult, SingularityHint, integrate_ray, tail_bound
from .seqcore import log_h

DEFAULT_D_CEILING = 1e3


def moment_envelope(kernel: KernelHandle, lam_re):
    """Nonincreasing majorant of ``|t^{lambda-1} e_M(t)|`` on ``t > 0``."""
    if kernel.flavor is KernelFlavor.GEVREY:
        a = kernel.alpha
        p = lam_re - 1.0 + 1.0 / a
        rstar = (a * p) ** a if p > 0 else 0.0

        def env(r):
            t = max(r, rstar)
            if t == 0:
                return 1.0 / a if p == 0 else math.inf
            return math.exp(p * math.log(t) - t ** (1.0 / a)) / a
        return env
    fit = ensure_sandwich(kernel, 0.0)
    if fit.k3 is None:
        from .errors import SandwichNotVerified
        raise SandwichNotVerified("no upper sandwich constant on the positive axis")
    seq = kernel.seq
    k3 = fit.k3
    # |e(t)| <= t h(k3/t); restricting the infimum to p >= p0 > lambda makes
    # t^lambda h(k3/t) decreasing
    p0 = int(math.floor(lam_re)) + 2
    lM0 = seq.log_M(p0)
    lm_prev = seq.log_m(p0 - 1)

    def env(r):
        if r <= 0:
            return math.inf
        lt = math.log(k3 / r)
        if -lt > lm_prev:
            val = log_h(seq, k3 / r)
        else:
            val = lM0 + p0 * lt
        return math.exp(lam_re * math.log(r) + val)
    return env


def _warm_for_moments(kernel, lam_re, cfg):
    if kernel.flavor is not KernelFlavor.CONSTRUCTED or kernel.cache.frozen:
        return
    env = moment_envelope(kernel, lam_re)
    R = 1.0
    while tail_bound(env, R) > 1e-3 * cfg.abs_tol and R < 1e12:
        R *= 2.0
    kernel.warm_cache(0.0, modulus_lo=1.0 / (2.0 * R), modulus_hi=1e6)


def moment_quad(kernel: KernelHandle, lam, cfg: QuadConfig | None = None):
    """Moment ``m(lambda)`` with full quadrature diagnostics."""
    lam = complex(lam)
    if lam.real < 0:
        raise ReLambdaNegative(f"Re lambda = {lam.real} < 0")
    cfg = cfg or kernel.quad_cfg
    cfg = cfg.replace(singularity_hint=SingularityHint.LOG_AT_LEFT)
    is_int = lam.imag == 0 and float(lam.real).is_integer()
    store = kernel.__dict__.setdefault("_moment_memo", {})
    key = (int(lam.real), cfg.rel_tol, cfg.abs_tol) if is_int else None
    if key is not None and key in store:
        return store[key]
    _warm_for_moments(kernel, lam.real, cfg)

    def f(u):
        lu = np.log(u)
        return np.exp((lam - 1.0) * lu + kernel.log_e_from_log(lu))

    res = integrate_ray(f, 0.0, moment_envelope(kernel, lam.real), cfg)
    if key is not None:
        store[key] = res
    return res


def moment(kernel: KernelHandle, lam, cfg: QuadConfig | None = None) -> complex:
    """``m(lambda) = int_0^inf t^{lambda-1} e_M(t) dt`` for ``Re lambda >= 0``."""
    return moment_quad(kernel, lam, cfg).value


@dataclass
class MomentTable:
    kernel: KernelHandle = field(repr=False)
    pmax: int
    m: np.ndarray
    err: np.ndarray
    equivalence: dict
    logconvex: bool = True

    def __len__(self):
        return self.pmax + 1

    def log_M(self):
        return self.kernel.seq.log_M(np.arange(self.pmax + 1))

    def rows(self):
        """CSV rows ``p, M_p, m_p, abs_err, ratio_log`` (M_p from logs)."""
        lM = self.log_M()
        for p in range(self.pmax + 1):
            yield (p, _fmt_from_log(lM[p]), _g17(self.m[p]), _g17(self.err[p]),
                   _g17(self.equivalence["ratio_log"][p]))


def _g17(x):
    return format(float(x), ".17g")


def _fmt_from_log(lv):
    # decimal value of exp(lv) even when it overflows a double
    if lv < 700:
        return _g17(math.exp(lv))
    e10 = lv / math.log(10.0)
    k = math.floor(e10)
    return f"{10 ** (e10 - k):.16f}e+{k:02d}"


def fit_equivalence(ratio_log, ceiling=DEFAULT_D_CEILING):
    """Fit ``C^{-1} D^{-p} <= m(p)/M_p <= C D^p`` from ``log(m(p)/M_p)``."""
    r = np.asarray(ratio_log, dtype=float)
    finite = bool(np.all(np.isfinite(r)))
    if not finite:
        return {"ratio_log": r.tolist(), "step_bound_D": math.inf,
                "offset_C": math.inf, "pass": False}
    logD = float(np.max(np.abs(np.diff(r)))) if r.size > 1 else 0.0
    p = np.arange(r.size)
    logC = max(0.0, float(np.max(np.abs(r) - p * logD)))
    D = math.exp(logD)
    return {"ratio_log": r.tolist(), "step_bound_D": D, "offset_C": math.exp(logC),
            "pass": bool(D <= ceiling)}


def moment_table(kernel: KernelHandle, pmax, cfg: QuadConfig | None = None,
                 ceiling=DEFAULT_D_CEILING):
    """Moments ``m(0..pmax)`` with the equivalence diagnostics against M."""
    pmax = int(pmax)
    if pmax < 4:
        raise InputError("pmax must be at least 4")
    cfg = cfg or kernel.quad_cfg
    if kernel.flavor is KernelFlavor.CONSTRUCTED:
        _warm_for_moments(kernel, float(pmax), cfg)
    res = [moment_quad(kernel, p, cfg) for p in range(pmax + 1)]
    m = np.array([r.value.real for r in res])
    err = np.array([r.abs_error_estimate for r in res])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.log(m) - kernel.seq.log_M(np.arange(pmax + 1))
    eq = fit_equivalence(ratio, ceiling)
    lm = np.log(m)
    lc = bool(np.all(2 * lm[1:-1] <= lm[:-2] + lm[2:] + math.log1p(1e-8)))
    eq["pass"] = eq["pass"] and bool(np.all(m > 0))
    return MomentTable(kernel, pmax, m, err, eq, lc)
