"""Flat functions ``G_M`` and kernels ``e_M(z) = z G_M(1/z)``.

Two flavours are provided.  The closed-form Gevrey kernel
``e(z) = (1/alpha) z^{1/alpha} exp(-z^{1/alpha})`` serves as the oracle.
The constructed kernel evaluates

    log G(w) = (1/pi) int log h_{M^s}(|t|) (i t w^s - 1)/(i t - w^s) dt/(1+t^2).

Folding ``t -> -t`` and writing ``t = e^{-v}`` turns the integral into
``(1/pi) int L(v) sech(v + s log w) dv`` where ``L(v) = log h_{M^s}(e^{-v})``
is concave and piecewise linear with slope changes of -1 at every
``log m_q^s``.  Integrating each ramp exactly gives the series

    log G(w) = -(2/pi) sum_q Ti2(w^{-s} / m_q^s)

with ``Ti2`` the inverse tangent integral.  Terms with ``|x_q| <= 1/2`` are
summed through Hurwitz zeta values of the power-law tail, so an evaluation
costs a few hundred dilogarithms and is accurate to roughly 1e-14.  The
direct quadrature of the original integral is kept as a cross-check.
"""

from __future__ import annotations

import enum
import hashlib
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _core
from .errors import (ArgumentOutsideSector, DeltaOutOfRange,
                     FlavorSequenceMismatch, InputError, SandwichNotVerified)
from .quad import QuadConfig, SingularityHint, integrate_finite
from .seqcore import SequenceModel, estimate_gamma, log_h

CACHE_ENV = "ULTRASUM_CACHE"
CACHE_MIN_MODULUS = 1e-6
CACHE_TOL = 3e-13
# below this log G underflows in double precision, so bands stop there
CACHE_LOG_FLOOR = -750.0
_N_TAIL_TERMS = 30
_Q_CAP = 1 << 21


class KernelFlavor(str, enum.Enum):
    CONSTRUCTED = "constructed"
    GEVREY = "gevrey"


@dataclass(frozen=True)
class RayPoint:
    """Point of the Riemann surface of the logarithm."""
    modulus: float
    argument: float = 0.0

    def __post_init__(self):
        if not (self.modulus > 0 and math.isfinite(self.modulus)):
            raise InputError(f"modulus must be positive, got {self.modulus}")
        if not math.isfinite(self.argument):
            raise InputError("argument must be finite")

    @classmethod
    def from_complex(cls, z):
        z = complex(z)
        return cls(abs(z), math.atan2(z.imag, z.real))

    @classmethod
    def coerce(cls, z):
        return z if isinstance(z, RayPoint) else cls.from_complex(z)

    def log(self):
        return complex(math.log(self.modulus), self.argument)

    def to_complex(self):
        return self.modulus * complex(math.cos(self.argument), math.sin(self.argument))

    def inverse(self):
        return RayPoint(1.0 / self.modulus, -self.argument)

    def conjugate(self):
        return RayPoint(self.modulus, -self.argument)

    def __mul__(self, other):
        other = RayPoint.coerce(other)
        return RayPoint(self.modulus * other.modulus, self.argument + other.argument)

    def __truediv__(self, other):
        other = RayPoint.coerce(other)
        return RayPoint(self.modulus / other.modulus, self.argument - other.argument)


@dataclass
class SandwichFit:
    k1: float | None
    k2: float | None
    k3: float | None
    passed: bool
    argument: float = 0.0
    grid: tuple = ()
    skipped: int = 0

    def as_dict(self):
        return {"k1": self.k1, "k2": self.k2, "k3": self.k3, "pass": self.passed,
                "argument": self.argument, "grid_min": min(self.grid, default=None),
                "grid_max": max(self.grid, default=None), "grid_points": len(self.grid)}


def _arg_key(theta):
    return round(float(theta), 12)


# ------------------------------------------------------------- cache

@dataclass
class _Band:
    rho: np.ndarray
    val: np.ndarray
    der: np.ndarray

    def covers(self, r):
        return (r >= self.rho[0]) & (r <= self.rho[-1])

    def interp(self, r):
        i = np.clip(np.searchsorted(self.rho, r, side="right") - 1, 0, self.rho.size - 2)
        h = self.rho[i + 1] - self.rho[i]
        t = (r - self.rho[i]) / h
        t2 = t * t
        t3 = t2 * t
        h00 = 2 * t3 - 3 * t2 + 1
        h10 = t3 - 2 * t2 + t
        h01 = -2 * t3 + 3 * t2
        h11 = t3 - t2
        return (h00 * self.val[i] + h10 * h * self.der[i]
                + h01 * self.val[i + 1] + h11 * h * self.der[i + 1])


class KernelCache:
    """Per-argument memo of ``log G`` on a log-modulus grid.

    Values and exact derivatives are stored at the nodes and joined by cubic
    Hermite pieces; nodes are inserted until every piece matches a fresh
    evaluation at its midpoint within ``tol``.
    """

    def __init__(self, key, tol=CACHE_TOL):
        self.key = key
        self.tol = tol
        self.bands = {}
        self.frozen = False

    def __len__(self):
        return sum(b.rho.size for b in self.bands.values())

    def lookup(self, theta, rho):
        band = self.bands.get(_arg_key(theta))
        if band is None:
            return None, np.zeros(np.shape(rho), dtype=bool)
        ok = band.covers(rho)
        out = np.full(np.shape(rho), np.nan + 0j)
        if ok.any():
            out[ok] = band.interp(rho[ok])
        return out, ok

    def save(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        keys = sorted(self.bands)
        arrays = {"args": np.array(keys, dtype=float),
                  "tol": np.array(self.tol)}
        for i, k in enumerate(keys):
            b = self.bands[k]
            arrays[f"rho{i}"] = b.rho
            arrays[f"val{i}"] = b.val
            arrays[f"der{i}"] = b.der
        path = directory / f"kernel_{self.key}.npz"
        np.savez(path, **arrays)
        return path

    def load(self, directory):
        path = Path(directory) / f"kernel_{self.key}.npz"
        if not path.exists():
            return False
        with np.load(path) as data:
            for i, k in enumerate(data["args"]):
                self.bands[_arg_key(k)] = _Band(data[f"rho{i}"], data[f"val{i}"],
                                                data[f"der{i}"])
        return True


def cache_dir(explicit=None):
    """Cache directory: an explicit path wins over ``ULTRASUM_CACHE``."""
    if explicit:
        return Path(explicit)
    env = os.environ.get(CACHE_ENV)
    return Path(env) if env else None


# ------------------------------------------------------------ series

def scaled_hurwitz(sigma, N, shift=16):
    """``N^sigma * zeta(sigma, N)`` for ``sigma > 1``, ``N >= 1``.

    A few leading terms are summed directly and the rest by Euler-Maclaurin,
    which keeps everything in range even when ``zeta`` itself underflows.
    """
    sigma = np.asarray(sigma, dtype=float)
    N = float(N)
    j = np.arange(shift, dtype=float)
    head = np.exp(-sigma[..., None] * np.log1p(j / N)).sum(axis=-1)
    M = N + shift
    em = (M / (sigma - 1.0) + 0.5 + sigma / (12.0 * M)
          - sigma * (sigma + 1) * (sigma + 2) / (720.0 * M ** 3)
          + sigma * (sigma + 1) * (sigma + 2) * (sigma + 3) * (sigma + 4)
          / (30240.0 * M ** 5))
    return head + np.exp(-sigma * math.log(M / N)) * em


class KernelHandle:
    """Evaluator for ``G_M`` and ``e_M`` with its sector parameters.

    Use :func:`build_kernel` to construct one.
    """

    def __init__(self, seq, delta, flavor, quad_cfg, gamma, delta1, s=None):
        self.seq = seq
        self.delta = float(delta)
        self.flavor = KernelFlavor(flavor)
        self.quad_cfg = quad_cfg
        self.gamma = float(gamma)
        self.delta1 = float(delta1)
        self.s = None if s is None else float(s)
        self.alpha = seq.source.alpha if self.flavor is KernelFlavor.GEVREY else None
        self.sandwich = {}
        self.cache = KernelCache(self._cache_key())
        if self.flavor is KernelFlavor.CONSTRUCTED:
            self._seq_s = seq.power(self.s)
            g, c, _ = self._seq_s.tail_params()
            self._g, self._c = g, c
            self._log_q = np.array(self._seq_s.log_quotients)

    def __repr__(self):
        return (f"KernelHandle(flavor={self.flavor.value}, delta={self.delta}, "
                f"delta1={self.delta1}, s={self.s}, gamma={self.gamma})")

    def _cache_key(self):
        parts = (self.seq.digest(), self.flavor.value, repr(self.delta1),
                 repr(self.s), repr(CACHE_TOL), "series-v1")
        return hashlib.sha256("|".join(parts).encode()).hexdigest()[:20]

    def describe(self):
        return {"flavor": self.flavor.value, "delta": self.delta,
                "delta1": self.delta1, "s": self.s, "gamma": self.gamma,
                "alpha": self.alpha, "backend": _core.BACKEND}

    # -- constructed flavour internals
    def _extended_log_q(self, Q):
        if Q > self._log_q.size:
            q = np.arange(self._log_q.size, Q, dtype=float)
            self._log_q = np.concatenate([self._log_q,
                                          self._c + self._g * np.log(q + 1.0)])
        return self._log_q[:Q]

    def series_log_G(self, ell):
        """``(log G, d log G / d ell)`` at ``ell = s log w`` (complex array)."""
        ell = np.atleast_1d(np.asarray(ell, dtype=complex))
        P = self._seq_s.pmax
        g, c = self._g, self._c
        # first index whose tail term has modulus <= 1/2
        with np.errstate(over="ignore"):
            need = np.exp((-ell.real - c + math.log(2.0)) / g)
        Q = np.maximum(P, np.ceil(need)).astype(float)
        bucket = np.where(Q <= P, float(P), 2.0 ** np.ceil(np.log2(np.maximum(Q, 1))))
        I = np.empty(ell.shape, dtype=complex)
        dI = np.empty(ell.shape, dtype=complex)
        k = np.arange(_N_TAIL_TERMS)
        odd = 2.0 * k + 1.0
        sign = (-1.0) ** k
        for b in np.unique(bucket):
            sel = bucket == b
            if not np.isfinite(b) or b > _Q_CAP:
                I[sel] = -np.inf
                dI[sel] = np.inf
                continue
            Qb = int(b)
            s2, s1 = _core.direct_sums(ell[sel], self._extended_log_q(Qb))
            N = Qb + 1.0
            B = scaled_hurwitz(g * odd, N)
            xt = np.exp(-ell[sel] - c - g * math.log(N))
            pw = xt[:, None] ** odd[None, :]
            t2 = (pw * (sign * B / odd ** 2)[None, :]).sum(axis=1)
            t1 = (pw * (sign * B / odd)[None, :]).sum(axis=1)
            I[sel] = -(2.0 / math.pi) * (s2 + t2)
            dI[sel] = (2.0 / math.pi) * (s1 + t1)
        return I, dI

    def _log_G_from_log(self, lw, use_cache=True):
        """``log G`` for complex logs ``lw`` of the argument (arrays)."""
        lw = np.asarray(lw, dtype=complex)
        if self.flavor is KernelFlavor.GEVREY:
            a = self.alpha
            return lw - math.log(a) - lw / a - np.exp(-lw / a)
        out = np.empty(lw.shape, dtype=complex)
        todo = np.ones(lw.shape, dtype=bool)
        if use_cache and self.cache.bands:
            for theta in np.unique(lw.imag):
                sel = lw.imag == theta
                vals, ok = self.cache.lookup(theta, lw.real[sel])
                if vals is not None and ok.any():
                    idx = np.flatnonzero(sel)[ok]
                    out.flat[idx] = vals[ok]
                    todo.flat[idx] = False
        if todo.any():
            I, _ = self.series_log_G(self.s * lw[todo])
            out[todo] = I
        return out

    def log_e_from_log(self, lz, use_cache=True):
        """``log e_M(z)`` for complex logs ``lz`` of the argument."""
        lz = np.asarray(lz, dtype=complex)
        if self.flavor is KernelFlavor.GEVREY:
            a = self.alpha
            return -math.log(a) + lz / a - np.exp(lz / a)
        return lz + self._log_G_from_log(-lz, use_cache)

    # -- cache warm-up
    def warm_cache(self, theta=0.0, modulus_lo=1e-2, modulus_hi=1e6, step=0.25):
        """Populate the cache band for ``arg w = theta`` on a modulus range."""
        if self.flavor is KernelFlavor.GEVREY:
            return 0
        if self.cache.frozen:
            raise RuntimeError("kernel cache is frozen")
        lo = math.log(max(modulus_lo, CACHE_MIN_MODULUS))
        hi = math.log(modulus_hi)
        lo = min(max(lo, self._underflow_rho(theta)), hi - step)
        key = _arg_key(theta)
        old = self.cache.bands.get(key)
        if old is not None and old.rho[0] <= lo and old.rho[-1] >= hi:
            return old.rho.size
        if old is not None:
            lo, hi = min(lo, old.rho[0]), max(hi, old.rho[-1])
        n = max(2, int(math.ceil((hi - lo) / step)) + 1)
        rho = np.linspace(lo, hi, n)

        def evaluate(r):
            I, dI = self.series_log_G(self.s * (r + 1j * theta))
            return I, self.s * dI

        val, der = evaluate(rho)
        pending = np.ones(rho.size - 1, dtype=bool)
        for _ in range(40):
            idx = np.flatnonzero(pending)
            if idx.size == 0:
                break
            mids = 0.5 * (rho[idx] + rho[idx + 1])
            mv, md = evaluate(mids)
            band = _Band(rho, val, der)
            bad = np.abs(band.interp(mids) - mv) > self.cache.tol
            bad &= (rho[idx + 1] - rho[idx]) > 1e-6
            pending[:] = False
            if not bad.any():
                break
            ins = idx[bad]
            rho = np.insert(rho, ins + 1, mids[bad])
            val = np.insert(val, ins + 1, mv[bad])
            der = np.insert(der, ins + 1, md[bad])
            # both halves of every split piece need a new midpoint check
            pending = np.zeros(rho.size - 1, dtype=bool)
            new_pos = ins + 1 + np.arange(ins.size)
            pending[new_pos - 1] = True
            pending[new_pos] = True
        self.cache.bands[key] = _Band(rho, val, der)
        return rho.size

    def _underflow_rho(self, theta):
        # log G decreases towards w = 0; bisect for Re log G = CACHE_LOG_FLOOR
        memo = self.__dict__.setdefault("_floor_memo", {})
        key = _arg_key(theta)
        if key not in memo:
            memo[key] = self._bisect_floor(theta)
        return memo[key]

    def _bisect_floor(self, theta):
        def f(r):
            return self.series_log_G(np.array([self.s * (r + 1j * theta)]))[0][0].real

        a, b = math.log(CACHE_MIN_MODULUS), 0.0
        if f(a) > CACHE_LOG_FLOOR or f(b) <= CACHE_LOG_FLOOR:
            return a
        for _ in range(50):
            m = 0.5 * (a + b)
            if f(m) <= CACHE_LOG_FLOOR:
                a = m
            else:
                b = m
        return a

    def freeze(self):
        self.cache.frozen = True


# ---------------------------------------------------------- public API

def build_kernel(seq: SequenceModel, delta, flavor="constructed", quad_cfg=None,
                 delta1=None, s=None):
    """Build a kernel handle for ``seq`` on the sector ``S_delta``.

    Parameters
    ----------
    seq : SequenceModel
    delta : float
        Opening parameter, ``0 < delta < gamma(M)``.
    flavor : {"constructed", "gevrey"}
    quad_cfg : QuadConfig, optional
        Tolerances for integrals that use this kernel.
    delta1, s : float, optional
        Override the default midpoints ``delta1 = (delta+gamma)/2`` and
        ``s = (1/gamma + 1/delta1)/2``.
    """
    flavor = KernelFlavor(flavor)
    quad_cfg = quad_cfg or QuadConfig()
    gamma = estimate_gamma(seq).gamma
    if not 0 < delta < gamma:
        raise DeltaOutOfRange(f"delta={delta} must lie in (0, {gamma:g})")
    if flavor is KernelFlavor.GEVREY:
        if not seq.is_gevrey:
            raise FlavorSequenceMismatch("closed-form kernel needs a Gevrey sequence")
        d1 = (delta + gamma) / 2 if delta1 is None else delta1
        return KernelHandle(seq, delta, flavor, quad_cfg, gamma, d1)
    d1 = (delta + gamma) / 2 if delta1 is None else float(delta1)
    if not delta < d1 < gamma:
        raise DeltaOutOfRange(f"delta1={d1} must lie in ({delta}, {gamma:g})")
    s = (1.0 / gamma + 1.0 / d1) / 2 if s is None else float(s)
    if not (s * d1 < 1 < s * gamma):
        raise DeltaOutOfRange(f"s={s} violates s*delta1 < 1 < s*gamma")
    if not s * seq.tail_slope > 1:
        raise InputError("sequence tail grows too slowly for the chosen s")
    return KernelHandle(seq, delta, flavor, quad_cfg, gamma, d1, s)


def _check_sector(arg, half_width, what):
    if not abs(arg) < half_width * math.pi / 2:
        raise ArgumentOutsideSector(
            f"|arg {what}| = {abs(arg):.6g} not below {half_width * math.pi / 2:.6g}")


def _as_logs(z):
    """Complex logs of a RayPoint, complex scalar or complex array."""
    if isinstance(z, RayPoint):
        return np.array([z.log()]), True
    arr = np.asarray(z, dtype=complex)
    if (arr == 0).any():
        raise InputError("zero is not a point of the sector")
    return np.log(arr), arr.ndim == 0


def eval_log_G(handle, w, use_cache=True):
    """``log G_M(w)`` on the Riemann surface (branch fixed by arg w)."""
    lw, scalar = _as_logs(w)
    lim = handle.delta1
    if lw.size:
        _check_sector(np.abs(lw.imag).max(), lim, "w")
    out = handle._log_G_from_log(lw, use_cache)
    return complex(out.ravel()[0]) if scalar else out


def eval_G(handle, w, use_cache=True):
    """``G_M(w)`` for ``|arg w| < delta1 pi/2``."""
    lg = eval_log_G(handle, w, use_cache)
    return np.exp(lg) if not isinstance(lg, complex) else complex(np.exp(lg))


def eval_log_e(handle, z, use_cache=True):
    lz, scalar = _as_logs(z)
    if lz.size:
        _check_sector(np.abs(lz.imag).max(), handle.delta, "z")
    out = handle.log_e_from_log(lz, use_cache)
    return complex(out.ravel()[0]) if scalar else out


def eval_e(handle, z, use_cache=True):
    """``e_M(z) = z G_M(1/z)`` for ``|arg z| < delta pi/2``."""
    le = eval_log_e(handle, z, use_cache)
    return np.exp(le) if not isinstance(le, complex) else complex(np.exp(le))


def log_G_quadrature(handle, w, cfg=None):
    """Direct quadrature of the defining integral (cross-check only).

    ``log h_{M^s}`` has a kink at every ``m_q^{-s}``, which limits the
    attainable accuracy to roughly 1e-8.
    """
    if handle.flavor is not KernelFlavor.CONSTRUCTED:
        raise InputError("only defined for the constructed flavor")
    w = RayPoint.coerce(w)
    _check_sector(w.argument, handle.delta1, "w")
    cfg = cfg or QuadConfig(rel_tol=1e-10, abs_tol=1e-10, max_subdivisions=8192,
                            singularity_hint=SingularityHint.LOG_AT_ZERO_SYMMETRIC)
    W = complex(np.exp(handle.s * w.log()))
    seq_s = handle._seq_s
    T0 = math.exp(-seq_s.log_quotients[0])

    def f(t):
        lh = log_h(seq_s, np.abs(t))
        return lh * (1j * t * W - 1.0) / (1j * t - W) / (1.0 + t * t)

    res = integrate_finite(f, -T0, T0, cfg)
    return res.value / math.pi, res.abs_error_estimate / math.pi


def verify_sandwich(handle, grid=None, argument=0.0, k_range=(1e-6, 1e6),
                    k1_floor=1e-3, slack=1e-12):
    """Fit ``k1 h(k2 x) <= |G(x e^{i theta})| <= h(k3 x)`` on a grid.

    ``k3`` is the smallest constant of the form ``2^{j/16}`` for which the
    upper bound holds at every grid point; ``k2`` is the largest such
    constant for which ``k1 = min |G| / h(k2 x)`` stays above ``k1_floor``.
    The fit is stored on the handle under ``argument``.
    """
    if grid is None:
        grid = np.logspace(-3, 3, 61)
    x = np.asarray(grid, dtype=float).ravel()
    if x.size == 0 or (x <= 0).any():
        raise InputError("sandwich grid must be nonempty and positive")
    lw = np.log(x) + 1j * argument
    _check_sector(argument, handle.delta1, "w")
    lg = handle._log_G_from_log(lw).real
    fin = np.isfinite(lg)
    xs, lg = x[fin], lg[fin]
    step = math.log(2.0) / 16
    jlo = int(math.floor(math.log(k_range[0]) / step))
    jhi = int(math.ceil(math.log(k_range[1]) / step))
    tol = math.log1p(slack)

    def upper_ok(j):
        lh = log_h(handle.seq, math.exp(j * step) * xs)
        return bool(np.all(lg <= lh + tol * np.maximum(1.0, np.abs(lg))))

    def k1_of(j):
        lh = log_h(handle.seq, math.exp(j * step) * xs)
        return float(np.min(lg - lh))

    k3 = None
    if xs.size and upper_ok(jhi):
        lo, hi = jlo - 1, jhi
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if upper_ok(mid):
                hi = mid
            else:
                lo = mid
        k3 = math.exp(hi * step)
    k1 = k2 = None
    floor = math.log(k1_floor)
    if xs.size and k1_of(jlo) >= floor:
        lo, hi = jlo, jhi + 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if k1_of(mid) >= floor:
                lo = mid
            else:
                hi = mid
        k2 = math.exp(lo * step)
        k1 = min(1.0, math.exp(k1_of(lo)))
    fit = SandwichFit(k1, k2, k3, k3 is not None and k2 is not None,
                      float(argument), tuple(float(v) for v in x), int((~fin).sum()))
    handle.sandwich[_arg_key(argument)] = fit
    return fit


def ensure_sandwich(handle, argument):
    fit = handle.sandwich.get(_arg_key(argument))
    if fit is None:
        fit = verify_sandwich(handle, argument=argument)
    return fit


def envelope_for_ray(handle, z, tau=0.0):
    """Nonincreasing majorant ``r -> B(r) >= |e_M(r e^{i tau}/z)| / r``.

    Constructed kernels use ``(1/|z|) h_M(k3 |z|/r)`` with the sandwich
    constant fitted at ``arg G = arg z - tau`` (raises SandwichNotVerified if
    that fit is missing or failed); closed-form kernels use the exact modulus
    made monotone past its maximum.
    """
    z = RayPoint.coerce(z)
    phi = tau - z.argument
    _check_sector(phi, handle.delta, "u/z")
    zm = z.modulus
    if handle.flavor is KernelFlavor.GEVREY:
        a = handle.alpha
        b = math.cos(phi / a)
        p = 1.0 / a - 1.0
        # rho^p exp(-b rho^{1/a}) peaks at rho* = (p a / b)^a when p > 0
        rstar = (p * a / b) ** a if p > 0 else 0.0

        def env(r):
            rho = max(r / zm, rstar)
            return math.exp(p * math.log(rho) - b * rho ** (1.0 / a)) / (a * zm) if rho > 0 else (
                1.0 / zm if p == 0 else math.inf)
        return env
    fit = handle.sandwich.get(_arg_key(-phi))
    if fit is None or fit.k3 is None:
        raise SandwichNotVerified(f"no upper sandwich constant at argument {-phi:.6g}")
    k3 = fit.k3
    seq = handle.seq

    def env(r):
        if r <= 0:
            return 1.0 / zm
        return math.exp(log_h(seq, k3 * zm / r)) / zm
    return env
