"""Directional M-Laplace transform and the M-summation pipeline.

A formal series ``sum f_n z^n`` is summed in direction ``d`` by taking its
formal Borel transform ``sum f_n u^n / m(n)``, replacing it with a
user-supplied analytic continuation ``g`` and integrating

    f(z) = int_0^{inf e^{i tau}} e_M(u/z) g(u) du/u.
"""

from __future__ import annotations

import ast
import math
import operator
import warnings
from dataclasses import dataclass, field
from typing import Callable

import mpmath as mp
import numpy as np

from .errors import (ArgumentTooFarFromDirection, BandExceeded, ContinuationMismatch,
                     DirectionOutsideSector, GrowthBoundViolated, InputError)
from .formal import (TruncatedSeries, _moment_values, certify_norm, check_certificate,
                     formal_borel)
from .kernel import (KernelFlavor, KernelHandle, RayPoint, ensure_sandwich,
                     envelope_for_ray)
from .quad import QuadConfig, QuadResult, SingularityHint, integrate_ray
from .seqcore import check_rho_property, log_h

GROWTH_POINTS = 32
GROWTH_K4_CEILING = 1e8
PROBES_PER_RADIUS = 8
PROBE_RADII = (0.25, 0.5)
PROBE_TOL = 1e-8
DIRECTION_OFFSET = 0.05
SUM_CFG = QuadConfig(rel_tol=1e-12, abs_tol=1e-15, max_subdivisions=1 << 12,
                     singularity_hint=SingularityHint.LOG_AT_LEFT)


# ------------------------------------------------------------ continuation

@dataclass
class ContinuedBorelFunction:
    """Analytic continuation ``g`` of a formal Borel transform.

    Attributes
    ----------
    eval : callable
        Vectorised ``u -> g(u)`` on complex arrays.
    sector : tuple
        ``(d, eps)``: ``g`` is claimed holomorphic for ``|arg u - d| < eps pi/2``.
    growth : tuple or None
        ``(k4, k5)`` with ``|g(u)| <= k4 / h_M(k5/|u|)``; ``k5 = inf`` means
        ``g`` is bounded by ``k4``.
    log_abs : callable, optional
        Exact ``(r, tau) -> log|g(r e^{i tau})|``, used where ``|g|`` would
        overflow.
    """
    eval: Callable
    sector: tuple = (0.0, 1.0)
    growth: tuple | None = None
    log_abs: Callable | None = None
    name: str = "custom"
    growth_checked: bool = False

    def __call__(self, u):
        return self.eval(u)

    def log_modulus(self, r, tau):
        r = np.asarray(r, dtype=float)
        if self.log_abs is not None:
            return np.asarray(self.log_abs(r, tau), dtype=float)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            return np.log(np.abs(self.eval(r * np.exp(1j * tau))))

    def to_dict(self):
        k4, k5 = self.growth if self.growth else (None, None)
        return {"name": self.name, "direction": self.sector[0], "opening": self.sector[1],
                "k4": k4, "k5": None if k5 is None or math.isinf(k5) else k5,
                "bounded": bool(k5 is not None and math.isinf(k5)),
                "growth_checked": self.growth_checked}


def fit_growth(g, seq, r_lo=1e-2, r_hi=1e3, points=GROWTH_POINTS,
               ceiling=GROWTH_K4_CEILING):
    """Fit ``(k4, k5)`` on ``points`` samples of the ray ``arg u = d``.

    ``k5`` is the largest constant ``2^{j/8}`` (or ``inf``) whose matching
    ``k4 = max |g(u)| h_M(k5/|u|)`` stays below ``ceiling``.
    """
    r = np.logspace(math.log10(r_lo), math.log10(r_hi), points)
    la = g.log_modulus(r, g.sector[0])
    if np.isnan(la).any() or np.isposinf(la).any():
        raise GrowthBoundViolated(f"{g.name} is not finite on the sampled ray")
    if not np.isfinite(la).any():
        return 0.0, math.inf
    lim = math.log(ceiling)
    top = float(np.max(la))
    if top <= lim:
        return math.exp(top), math.inf

    def log_k4(K):
        return float(np.max(la + log_h(seq, K / r)))

    step = math.log(2.0) / 8
    js = np.arange(-120, 121)
    ok = [j for j in js if log_k4(math.exp(j * step)) <= lim]
    if not ok:
        raise GrowthBoundViolated(f"{g.name} grows faster than k4/h_M(k5/|u|)")
    K = math.exp(max(ok) * step)
    return math.exp(log_k4(K)), K


def make_continuation(fn, seq=None, sector=(0.0, 1.0), growth=None, check_growth=True,
                      log_abs=None, name="custom"):
    """Wrap a callable as a ContinuedBorelFunction.

    With ``check_growth`` the bound ``(k4, k5)`` is fitted (or, if given,
    verified) on 32 ray points; set it to False to skip the check, in which
    case ``growth`` must be supplied or an exact ``log_abs`` available.
    """
    d, eps = float(sector[0]), float(sector[1])
    if not 0 < eps <= 2:
        raise InputError("sector opening must lie in (0, 2]")
    g = ContinuedBorelFunction(fn, (d, eps), growth, log_abs, name)
    if check_growth:
        if seq is None:
            raise InputError("growth check needs the sequence")
        k4, k5 = fit_growth(g, seq)
        if growth is not None and (growth[0] < k4 and growth[1] >= k5):
            raise GrowthBoundViolated(f"claimed growth {growth} fails on the sampled ray")
        g.growth = growth if growth is not None else (k4, k5)
        g.growth_checked = True
    return g


def _poly_sector_check(coeffs, d, eps):
    roots = np.roots(coeffs[::-1]) if len(coeffs) > 1 else np.array([])
    for z0 in roots:
        if abs(z0) < 1e-300:
            raise InputError("rational continuation has a pole at the origin")
        diff = (np.angle(z0) - d + math.pi) % (2 * math.pi) - math.pi
        if abs(diff) < eps * math.pi / 2:
            raise InputError(f"pole {complex(z0):.6g} lies inside the claimed sector")


def rational(*coeffs):
    """``u -> 1/(c0 + c1 u + ...)``."""
    c = np.array(coeffs, dtype=complex)
    if c.size == 0 or c[0] == 0:
        raise InputError("rational continuation needs c0 != 0")

    def fn(u):
        u = np.asarray(u, dtype=complex)
        acc = np.zeros(u.shape, dtype=complex) + c[-1]
        for a in c[-2::-1]:
            acc = acc * u + a
        return 1.0 / acc
    return fn, c


_FUNCS = {"exp": np.exp, "log": np.log, "sqrt": np.sqrt, "sin": np.sin,
          "cos": np.cos, "log1p": np.log1p, "expm1": np.expm1}
_MP_FUNCS = {"exp": mp.exp, "log": mp.log, "sqrt": mp.sqrt, "sin": mp.sin,
             "cos": mp.cos, "log1p": mp.log1p, "expm1": mp.expm1}
_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}


def _compile(tree, text, funcs, const):
    def build(node):
        if isinstance(node, ast.Expression):
            return build(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float, complex)):
            v = const(node.value)
            return lambda u: v
        if isinstance(node, ast.Name):
            if node.id == "u":
                return lambda u: u
            if node.id in ("pi", "e"):
                v = const(math.pi if node.id == "pi" else math.e)
                return lambda u: v
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            inner = build(node.operand)
            if isinstance(node.op, ast.USub):
                return lambda u: -inner(u)
            return inner
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            op, lhs, rhs = _BINOPS[type(node.op)], build(node.left), build(node.right)
            return lambda u: op(lhs(u), rhs(u))
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
                and node.func.id in funcs and len(node.args) == 1 and not node.keywords):
            fn, arg = funcs[node.func.id], build(node.args[0])
            return lambda u: fn(arg(u))
        raise InputError(f"unsupported element in continuation {text!r}")
    return build(tree)


def parse_expression(text):
    """Compile an arithmetic expression in ``u`` without ``eval``.

    The returned callable has a ``log_abs(r, tau)`` attribute that falls back
    to arbitrary precision where the double result overflows.
    """
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise InputError(f"cannot parse continuation {text!r}: {exc.msg}") from None
    body = _compile(tree, text, _FUNCS, complex)
    mp_body = _compile(tree, text, _MP_FUNCS, mp.mpc)

    def fn(u):
        u = np.asarray(u, dtype=complex)
        with np.errstate(all="ignore"):
            return np.broadcast_to(np.asarray(body(u), dtype=complex), u.shape).copy()

    def log_abs(r, tau):
        r = np.asarray(r, dtype=float)
        u = r * np.exp(1j * tau)
        with np.errstate(divide="ignore"):
            out = np.log(np.abs(fn(u)))
        for i in np.flatnonzero(~np.isfinite(out)):
            with mp.workdps(30):
                v = abs(mp_body(mp.mpc(complex(u.flat[i]))))
                out.flat[i] = float(mp.log(v)) if v != 0 else -math.inf
        return out

    fn.log_abs = log_abs
    return fn


def builtin_continuation(spec, seq, direction=0.0, opening=1.0, check_growth=True):
    """Named continuation or expression in ``u``.

    Names: ``one_over_one_plus_u``, ``exp``, ``log_one_plus_u`` and
    ``rational(c0, c1, ...)`` meaning ``1/(c0 + c1 u + ...)``; anything
    else is parsed as an expression such as ``"exp(-u)/(1+u)"``.
    """
    spec = spec.strip()
    sector = (direction, opening)
    if spec == "one_over_one_plus_u":
        spec = "rational(1,1)"
    if spec.startswith("rational(") and spec.endswith(")"):
        try:
            coeffs = [complex(x) for x in spec[len("rational("):-1].split(",") if x.strip()]
        except ValueError:
            raise InputError(f"bad rational coefficients in {spec!r}") from None
        fn, c = rational(*coeffs)
        _poly_sector_check(c, direction, opening)
        return make_continuation(fn, seq, sector, check_growth=check_growth, name=spec)
    if spec == "exp":
        return make_continuation(np.exp, seq, sector, check_growth=check_growth,
                                 log_abs=lambda r, t: r * math.cos(t), name="exp")
    if spec == "log_one_plus_u":
        _poly_sector_check(np.array([1.0, 1.0]), direction, opening)
        return make_continuation(lambda u: np.log1p(np.asarray(u, dtype=complex)), seq,
                                 sector, check_growth=check_growth, name=spec)
    fn = parse_expression(spec)
    return make_continuation(fn, seq, sector, check_growth=check_growth,
                             log_abs=fn.log_abs, name=spec)


# ------------------------------------------------------------ transform

@dataclass
class MSumResult:
    value: complex
    direction_used: float
    quad: QuadResult
    z: RayPoint

    def to_dict(self):
        return {"value": [self.value.real, self.value.imag],
                "direction_used": self.direction_used,
                "abs_error_estimate": self.quad.abs_error_estimate,
                "evaluations": self.quad.evaluations,
                "truncated_at": self.quad.truncated_at,
                "converged": self.quad.converged,
                "z": [self.z.modulus, self.z.argument]}


def band_radius(kernel, g, tau=0.0, z_arg=0.0):
    """``L = k5 / (rho(2) k3)``; ``inf`` for bounded ``g``."""
    if g.growth is None:
        warnings.warn("no growth constants; using the default band 0.1/m_0",
                      RuntimeWarning, stacklevel=2)
        return 0.1 / math.exp(kernel.seq.log_quotients[0])
    k5 = g.growth[1]
    if math.isinf(k5):
        return math.inf
    fit = ensure_sandwich(kernel, z_arg - tau)
    rho = check_rho_property(kernel.seq, 2.0)
    if fit.k3 is None or not rho.passed:
        warnings.warn("sandwich or rho(2) fit unavailable; using the default band",
                      RuntimeWarning, stacklevel=2)
        return 0.1 / math.exp(kernel.seq.log_quotients[0])
    return k5 / (rho.rho_fitted * fit.k3)


def _growth_envelope(g, seq, tau):
    if g.growth is not None:
        k4, k5 = g.growth
        if math.isinf(k5):
            return lambda r: k4
        return lambda r: k4 * math.exp(-float(log_h(seq, k5 / r))) if r > 0 else k4
    if g.log_abs is not None:
        # exact modulus made nondecreasing is enough for a product majorant
        return lambda r: math.exp(float(np.max(g.log_abs(np.array([r, 2 * r]), tau))))
    raise InputError("continuation needs growth constants or an exact modulus")


def m_laplace(kernel: KernelHandle, g: ContinuedBorelFunction, tau, z, cfg=None,
              enforce_band=True) -> MSumResult:
    """``int_0^{inf e^{i tau}} e_M(u/z) g(u) du/u`` with certified truncation."""
    z = RayPoint.coerce(z)
    tau = float(tau)
    d, eps = g.sector
    if not abs(tau - d) < eps * math.pi / 2:
        raise DirectionOutsideSector(f"tau={tau:.6g} outside the sector of g")
    if not abs(z.argument - tau) < kernel.delta * math.pi / 2:
        raise ArgumentTooFarFromDirection(
            f"|arg z - tau| = {abs(z.argument - tau):.6g} not below "
            f"{kernel.delta * math.pi / 2:.6g}")
    if enforce_band:
        L = band_radius(kernel, g, tau, z.argument)
        if z.modulus > L:
            raise BandExceeded(f"|z| = {z.modulus:.6g} exceeds the band radius {L:.6g}")
    cfg = (cfg or SUM_CFG).replace(singularity_hint=SingularityHint.LOG_AT_LEFT)
    if kernel.flavor is KernelFlavor.CONSTRUCTED:
        ensure_sandwich(kernel, z.argument - tau)
        if not kernel.cache.frozen:
            kernel.warm_cache(z.argument - tau, modulus_lo=z.modulus * 1e-3,
                              modulus_hi=1e6)
    env_e = envelope_for_ray(kernel, z, tau)
    env_g = _growth_envelope(g, kernel.seq, tau)
    lz = z.log()

    def f(u):
        lu = np.log(u)
        return np.exp(kernel.log_e_from_log(lu - lz) - lu) * g(u)

    res = integrate_ray(f, tau, lambda r: env_e(r) * env_g(r), cfg,
                        r_start=max(z.modulus, 1e-3))
    return MSumResult(complex(res.value), tau, res, z)


@dataclass
class DirectionCheck:
    residual: float
    error_budget: float
    ok: bool
    tau: tuple = ()

    def to_dict(self):
        return {"tau": list(self.tau), "residual": self.residual,
                "error_budget": self.error_budget, "ok": self.ok}


def direction_independence(kernel, g, tau1, tau2, z, cfg=None, factor=10.0):
    """Compare the transforms along two admissible directions.

    The check passes when the difference is at most ``factor`` times the
    sum of both quadrature error estimates.
    """
    r1 = m_laplace(kernel, g, tau1, z, cfg)
    r2 = m_laplace(kernel, g, tau2, z, cfg)
    res = abs(r1.value - r2.value)
    budget = r1.quad.abs_error_estimate + r2.quad.abs_error_estimate
    return DirectionCheck(res, budget, bool(res <= factor * budget), (tau1, tau2))


# ------------------------------------------------------------ pipeline

def borel_disc_radius(b):
    """Radius estimate ``1 / max_{n >= N/2} |b_n|^{1/n}`` of the Borel series."""
    N = b.size - 1
    n = np.arange(N + 1)
    mag = np.abs(b)
    sel = (n >= max(1, (N + 1) // 2)) & (mag > 0)
    if not sel.any():
        sel = (n >= 1) & (mag > 0)
    if not sel.any():
        return math.inf
    return float(1.0 / np.max(np.exp(np.log(mag[sel]) / n[sel])))


def probe_continuation(b, g, R):
    """Compare ``g`` with the Borel polynomial at 16 points inside the disc."""
    if math.isinf(R):
        R = 1.0
    d = g.sector[0]
    ang = d + 2 * math.pi * np.arange(PROBES_PER_RADIUS) / PROBES_PER_RADIUS
    pts = np.concatenate([f * R * np.exp(1j * ang) for f in PROBE_RADII])
    acc = np.zeros(pts.shape, dtype=complex) + b[-1]
    for c in b[-2::-1]:
        acc = acc * pts + c
    gv = g(pts)
    rel = np.abs(gv - acc) / np.maximum(1.0, np.abs(gv))
    worst = float(np.max(rel))
    if not worst <= PROBE_TOL:
        i = int(np.argmax(rel))
        raise ContinuationMismatch(
            f"continuation differs from the Borel series by {worst:.3g} at u={pts[i]:.4g}")
    return worst


def nearest_direction(g, kernel, z, margin=0.99):
    d, eps = g.sector
    half = margin * eps * math.pi / 2
    return float(min(max(z.argument, d - half), d + half))


@dataclass
class MSumRun:
    results: list
    directions: list
    borel_radius: float
    probe_residual: float
    certificate: dict | None
    continuation: dict = field(default_factory=dict)

    @property
    def values(self):
        return [r.value for r in self.results]

    @property
    def ok(self):
        return all(d.ok for d in self.directions)

    def to_dict(self):
        return {"results": [r.to_dict() for r in self.results],
                "direction_checks": [d.to_dict() for d in self.directions],
                "borel_radius": self.borel_radius,
                "probe_residual": self.probe_residual,
                "certificate": self.certificate, "continuation": self.continuation,
                "pass": self.ok}


def m_sum(kernel, moments, f_hat: TruncatedSeries, g: ContinuedBorelFunction, z_grid,
          tau=None, cfg=None, offset=DIRECTION_OFFSET, compare_directions=True):
    """Sum ``f_hat`` at every grid point.

    The Borel coefficients ``f_n/m(n)`` are checked against ``g`` at probe
    points; each ``z`` uses ``tau`` (or the admissible direction nearest to
    ``arg z``) and, optionally, a second direction ``offset`` away for the
    direction-independence residual.
    """
    zs = [RayPoint.coerce(z) for z in z_grid]
    plain = f_hat.to_plain()
    if plain.is_zero():
        zero = [MSumResult(0j, float(tau if tau is not None else g.sector[0]),
                           QuadResult(0j, 0.0, 0), z) for z in zs]
        return MSumRun(zero, [], math.inf, 0.0, None, g.to_dict())
    cert = plain.norm_cert
    if cert is None:
        cert = certify_norm(plain, kernel.seq)
    elif not check_certificate(plain, kernel.seq, cert):
        from .errors import NoNormCertificate
        raise NoNormCertificate("series violates its norm certificate")
    m = _moment_values(moments, plain.N)
    b = formal_borel(plain, m).coeffs
    R = borel_disc_radius(b)
    worst = probe_continuation(b, g, R)
    results, checks = [], []
    for z in zs:
        t = nearest_direction(g, kernel, z) if tau is None else float(tau)
        results.append(m_laplace(kernel, g, t, z, cfg))
        if compare_directions:
            d, eps = g.sector
            t2 = t + offset if t + offset < d + 0.99 * eps * math.pi / 2 else t - offset
            if abs(z.argument - t2) < kernel.delta * math.pi / 2:
                checks.append(direction_independence(kernel, g, t, t2, z, cfg))
    return MSumRun(results, checks, R, worst, {"C": cert.C, "A": cert.A}, g.to_dict())


# ------------------------------------------------------------ flat gap

@dataclass
class GapReport:
    moduli: list
    gap: list
    ratios: dict
    decreasing: bool
    fitted: dict

    def to_dict(self):
        return {"moduli": self.moduli, "gap": self.gap, "ratios": self.ratios,
                "decreasing_p6": self.decreasing, "fitted": self.fitted,
                "pass": self.decreasing}


def flat_gap(ext_op, g, z_grid, cfg=None, pmax=6):
    """``|T(a)(z) - (M-sum)(z)|`` on a shrinking grid.

    Ratios ``gap/|z|^p`` are reported for ``p <= pmax`` (grid ordered by
    decreasing modulus); ``decreasing`` refers to ``p = pmax``.  The decay is
    also fitted as ``gap <= C h_M(K |z|)``: ``K`` minimises the spread of
    ``log gap - log h_M(K |z|)`` (ties go to the smaller ``C``).
    """
    from .extend import apply
    zs = sorted((RayPoint.coerce(z) for z in z_grid), key=lambda z: -z.modulus)
    gaps = []
    for z in zs:
        if ext_op.is_zero:
            gaps.append(0.0)
            continue
        full = m_laplace(ext_op.kernel, g, nearest_direction(g, ext_op.kernel, z), z, cfg)
        gaps.append(abs(ext_op(z) - full.value))
    mods = np.array([z.modulus for z in zs])
    gap = np.array(gaps)
    ratios = {str(p): (gap / mods ** p).tolist() for p in range(pmax + 1)}
    r = gap / mods ** pmax
    decreasing = bool(np.all(np.diff(r) <= 0))
    fitted = {"C": 0.0, "K": None}
    ok = gap > 0
    if ok.sum() >= 1:
        seq = ext_op.kernel.seq
        best = None
        for j in range(-64, 65):
            K = 2.0 ** (j / 8)
            lh = log_h(seq, K * mods[ok])
            if not np.all(np.isfinite(lh)):
                continue
            dev = np.log(gap[ok]) - lh
            key = (round(float(dev.max() - dev.min()), 9), float(dev.max()))
            if best is None or key < best[0]:
                best = (key, K)
        if best is not None:
            (spread, logC), K = best
            C = math.exp(logC) if logC < 700 else math.inf
            fitted = {"C": C, "log_C": logC, "K": K, "log_spread": spread}
    return GapReport(mods.tolist(), gap.tolist(), ratios, decreasing, fitted)
