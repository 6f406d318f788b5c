"""Truncated-Laplace extension operator.

Given data ``lambda_p`` (derivatives at the vertex) with a norm certificate,
the operator returns

    f(z) = int_0^{R0} e_M(u/z) g(u) du/u,   g(u) = sum_p lambda_p u^p / (p! m(p)),

a holomorphic function on ``S_delta`` whose asymptotic expansion is
``sum lambda_p z^p / p!``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .errors import InputError, NoNormCertificate
from .formal import OVER_FACTORIAL, TruncatedSeries, _moment_values, check_certificate
from .kernel import KernelFlavor, KernelHandle, RayPoint, _check_sector
from .quad import QuadConfig, QuadResult, SingularityHint, integrate_finite

DEFAULT_EPS_MARGIN = 0.1
DEFAULT_MODULI = (0.02, 0.05, 0.1)
RESIDUAL_LIMIT = math.log(10.0)
# tolerance just above the error-estimate floor of 50 eps |f|; partial sums
# are compared at |z|^N scale
APPLY_CFG = QuadConfig(rel_tol=1e-13, abs_tol=1e-16, max_subdivisions=1 << 12,
                       singularity_hint=SingularityHint.LOG_AT_LEFT)


@dataclass(frozen=True, eq=False)
class ExtensionOperator:
    kernel: KernelHandle = field(repr=False)
    moments: np.ndarray = field(repr=False)
    data: TruncatedSeries = field(repr=False)
    borel: np.ndarray = field(repr=False)
    D2: float
    R0: float
    eps_margin: float
    quad_cfg: QuadConfig = APPLY_CFG

    @property
    def N(self):
        return self.data.N

    @property
    def is_zero(self):
        return not np.any(self.borel)

    def g(self, u):
        """Borel polynomial ``g(u) = sum b_p u^p`` by Horner."""
        u = np.asarray(u, dtype=complex)
        acc = np.zeros(u.shape, dtype=complex) + self.borel[-1]
        for b in self.borel[-2::-1]:
            acc = acc * u + b
        return acc

    def apply_quad(self, z):
        return apply_quad(self, z)

    def __call__(self, z):
        return apply(self, z)


def borel_coefficients(data, moments):
    """``b_p = lambda_p / (p! m(p))`` computed in the log domain."""
    lam = data.to_over_factorial().coeffs
    m = _moment_values(moments, data.N)
    p = np.arange(data.N + 1)
    mag = np.abs(lam)
    out = np.zeros(lam.shape, dtype=complex)
    nz = mag > 0
    out[nz] = (lam[nz] / mag[nz]) * np.exp(np.log(mag[nz]) - gammaln(p[nz] + 1.0)
                                           - np.log(m[nz]))
    return out


def build_extension(kernel, moments, data, eps_margin=DEFAULT_EPS_MARGIN,
                    quad_cfg=None):
    """Set up the operator for ``data`` (a certified TruncatedSeries).

    ``D2 = max_{1<=p<=N} |b_p|^{1/p}`` and ``R0 = (1 - eps_margin)/D2``; when
    only ``b_0`` is nonzero the radius is 1.
    """
    if not 0 < eps_margin < 1:
        raise InputError("eps_margin must lie in (0, 1)")
    if data.is_zero():
        b = np.zeros(data.N + 1, dtype=complex)
        return ExtensionOperator(kernel, np.asarray(getattr(moments, "m", moments)),
                                 data, b, 0.0, 1.0, eps_margin, quad_cfg or APPLY_CFG)
    if data.norm_cert is None or not check_certificate(data, kernel.seq, data.norm_cert):
        raise NoNormCertificate("data needs a norm certificate that holds")
    m = _moment_values(moments, data.N)
    b = borel_coefficients(data, m)
    p = np.arange(1, data.N + 1)
    mag = np.abs(b[1:])
    nz = mag > 0
    D2 = float(np.max(np.exp(np.log(mag[nz]) / p[nz]))) if nz.any() else 0.0
    R0 = (1.0 - eps_margin) / D2 if D2 > 0 else 1.0
    return ExtensionOperator(kernel, m, data, b, D2, R0, eps_margin,
                             quad_cfg or APPLY_CFG)


def _prepare(op, z):
    z = RayPoint.coerce(z)
    _check_sector(z.argument, op.kernel.delta, "z")
    k = op.kernel
    if k.flavor is KernelFlavor.CONSTRUCTED and not k.cache.frozen:
        k.warm_cache(z.argument, modulus_lo=z.modulus / op.R0, modulus_hi=1e6)
    return z


def apply_quad(op, z) -> QuadResult:
    """``f(z)`` with quadrature diagnostics."""
    z = _prepare(op, z)
    if op.is_zero:
        return QuadResult(0j, 0.0, 0)
    lz = z.log()
    k = op.kernel

    def f(u):
        lu = np.log(u)
        return np.exp(k.log_e_from_log(lu - lz) - lu) * op.g(u)

    return integrate_finite(f, 0.0, op.R0, op.quad_cfg)


def apply(op, z) -> complex:
    """Evaluate the extension at ``z`` (``|arg z| < delta pi/2``)."""
    return complex(apply_quad(op, z).value)


def partial_sum(data, z, N):
    """``S_N(z) = sum_{p<N} lambda_p z^p / p!``."""
    c = data.to_plain().coeffs[:N]
    z = complex(z)
    acc = 0j
    for a in c[::-1]:
        acc = acc * z + a
    return acc


@dataclass
class AsymptoticReport:
    Ns: list
    sup_err: list
    scaled_err: list
    fitted: dict
    residual: float
    pass_: bool
    by_argument: dict
    grid: list

    def to_dict(self):
        return {"Ns": self.Ns, "sup_err": self.sup_err, "scaled_err": self.scaled_err,
                "fitted": self.fitted, "max_residual": self.residual,
                "pass": self.pass_, "sup_err_by_argument": self.by_argument,
                "z_grid": self.grid}


def default_grid(delta, moduli=DEFAULT_MODULI):
    t = 0.8 * delta * math.pi / 2
    return [RayPoint(r, a) for r in moduli for a in (0.0, t, -t)]


def asymptotic_report(op, z_grid=None, N_max=12):
    """Measure ``|f(z) - S_N(z)|`` and fit ``C D^N D1^N M_N |z|^N``.

    For each ``N`` the scaled error ``max_z |f - S_N| / |z|^N`` is fitted by
    least squares as ``log C + N log(D D1) + log M_N``; the fit passes when
    no point lies more than ``log 10`` above the line, and ``C`` is then
    raised so that the bound holds at every ``N``.
    """
    if N_max > op.N:
        raise InputError(f"N_max={N_max} exceeds the data order {op.N}")
    grid = [RayPoint.coerce(z) for z in (z_grid or default_grid(op.kernel.delta))]
    Ns = list(range(0, N_max + 1))
    vals = [apply(op, z) for z in grid]
    err = np.array([[abs(v - partial_sum(op.data, z.to_complex(), N)) for N in Ns]
                    for v, z in zip(vals, grid)])
    mods = np.array([z.modulus for z in grid])
    with np.errstate(divide="ignore"):
        scaled = np.max(np.exp(np.log(err) - np.outer(np.log(mods), Ns)), axis=0)
    sup = err.max(axis=0)
    by_arg = {}
    for z, row in zip(grid, err):
        key = f"{z.argument:.12g}"
        by_arg[key] = np.maximum(by_arg.get(key, 0.0), row)
    by_arg = {k: v.tolist() for k, v in by_arg.items()}
    cert = op.data.norm_cert
    logD1 = math.log(cert.A) if cert is not None else 0.0
    seq = op.kernel.seq
    N = np.array(Ns, dtype=float)
    ok = scaled > 0
    if not np.all(np.isfinite(sup)):
        return AsymptoticReport(Ns, sup.tolist(), scaled.tolist(),
                                {"C": math.inf, "D": math.inf}, math.inf, False,
                                by_arg, [[z.modulus, z.argument] for z in grid])
    if ok.sum() >= 2:
        y = np.log(scaled[ok]) - seq.log_M(N[ok].astype(int)) - N[ok] * logD1
        A = np.vstack([np.ones(ok.sum()), N[ok]]).T
        (logC, logD), *_ = np.linalg.lstsq(A, y, rcond=None)
        res = y - (logC + logD * N[ok])
        worst = float(res.max())
        logC += max(worst, 0.0)
        fitted = {"C": math.exp(logC), "D": math.exp(logD)}
    elif ok.sum() == 1:
        y = float(np.log(scaled[ok][0]) - seq.log_M(int(N[ok][0])) - N[ok][0] * logD1)
        fitted, worst = {"C": math.exp(y), "D": 1.0}, 0.0
    else:
        fitted, worst = {"C": 0.0, "D": 1.0}, 0.0
    return AsymptoticReport(Ns, sup.tolist(), scaled.tolist(), fitted, worst,
                            bool(worst <= RESIDUAL_LIMIT), by_arg,
                            [[z.modulus, z.argument] for z in grid])


def _neville(xs, ys, x0=0.0):
    p = list(ys)
    n = len(xs)
    for k in range(1, n):
        for i in range(n - k):
            p[i] = ((x0 - xs[i + k]) * p[i] + (xs[i] - x0) * p[i + 1]) / (xs[i] - xs[i + k])
    return p[0]


def derivative_check(op, pmax=3, c0=0.02, levels=6, nodes=64, rel_tol=1e-3):
    """Check ``f^{(p)}(0) = lambda_p`` for ``p <= pmax``.

    Derivatives at ``c > 0`` come from the Cauchy formula on a circle of
    radius ``c sin(0.7 delta pi/2)``, which stays inside the sector; the
    values at ``c = c0/2^j`` are extrapolated to ``c = 0`` with Neville's
    scheme.
    """
    if pmax > min(3, op.N):
        raise InputError("derivative checks are limited to p <= min(3, N)")
    shrink = math.sin(0.7 * op.kernel.delta * math.pi / 2)
    theta = 2 * math.pi * np.arange(nodes) / nodes
    cs, ders = [], []
    for j in range(levels):
        c = c0 / 2 ** j
        rho = c * shrink
        pts = c + rho * np.exp(1j * theta)
        fv = np.array([apply(op, complex(w)) for w in pts])
        coef = np.fft.fft(fv) / nodes
        ders.append([coef[p] * math.factorial(p) / rho ** p for p in range(pmax + 1)])
        cs.append(c)
    target = op.data.to_over_factorial().coeffs
    out = []
    for p in range(pmax + 1):
        est = _neville(cs, [d[p] for d in ders])
        t = complex(target[p])
        rel = abs(est - t) / max(abs(t), 1e-300)
        out.append({"p": p, "estimate": [est.real, est.imag], "target": [t.real, t.imag],
                    "rel_err": rel, "pass": bool(rel <= rel_tol)})
    return out
