import math

import numpy as np
import pytest

from ultrasum.errors import ArgumentOutsideSector, MomentTableTooShort, NoNormCertificate
from ultrasum.extend import (apply, asymptotic_report, build_extension, default_grid,
                             derivative_check, partial_sum)
from ultrasum.formal import NormCertificate, TruncatedSeries, certify_norm
from ultrasum.kernel import RayPoint


@pytest.fixture(scope="module")
def euler_op(closed1, closed1_moments, euler_data):
    return build_extension(closed1, closed1_moments, euler_data)


def test_euler_borel_exact(euler_op):
    p = np.arange(euler_op.N + 1)
    assert np.allclose(euler_op.borel, (-1.0) ** p, rtol=1e-12, atol=0)
    assert euler_op.D2 == pytest.approx(1.0, rel=1e-12)
    assert euler_op.R0 == pytest.approx(0.9, rel=1e-12)


def test_zero_data(closed1, closed1_moments):
    op = build_extension(closed1, closed1_moments, TruncatedSeries(np.zeros(9)))
    assert op.is_zero and apply(op, 0.1) == 0
    rep = asymptotic_report(op, N_max=8)
    assert rep.pass_ and not np.any(rep.sup_err)


def test_certificate_required(closed1, closed1_moments, gev1):
    s = TruncatedSeries([1.0, 2.0, 3.0], "over-factorial")
    with pytest.raises(NoNormCertificate):
        build_extension(closed1, closed1_moments, s)
    bad = s.with_certificate(NormCertificate(1.0, 1.0))
    with pytest.raises(NoNormCertificate):
        build_extension(closed1, closed1_moments, bad)
    ok = s.with_certificate(certify_norm(s, gev1))
    with pytest.raises(MomentTableTooShort):
        build_extension(closed1, closed1_moments.m[:2], ok)


def test_constant_data(closed1, closed1_moments, gev1):
    s = TruncatedSeries([1.0, 0.0], "over-factorial")
    op = build_extension(closed1, closed1_moments, s.with_certificate(certify_norm(s, gev1)))
    assert op.R0 == 1.0
    assert abs(apply(op, 1e-3) - 1) < 1e-2
    rep = asymptotic_report(op, N_max=1)
    assert rep.pass_


def test_euler_value(euler_op, oracle):
    # the extension is the truncated integral, so it sits a flat gap away from
    # the full sum (1/z) e^{1/z} E1(1/z) of the plain Euler series
    v = apply(euler_op, 0.1)
    assert abs(v - 10 * oracle["e10_E1_10"]) <= 1e-3


def test_outside_sector(euler_op):
    with pytest.raises(ArgumentOutsideSector):
        apply(euler_op, RayPoint(0.1, 0.5 * math.pi / 2))


def test_report_euler(euler_op):
    grid = [RayPoint(r) for r in (0.02, 0.05, 0.1)]
    rep = asymptotic_report(euler_op, grid, 12)
    assert rep.pass_ and rep.fitted["D"] <= 20
    assert all(math.isfinite(x) and x >= 0 for x in rep.sup_err)
    # error shape: sup_err[N] / (M_N rho^N) bounded for a modest rho
    ratio = [e / (math.factorial(N) * 10.0 ** -N) for N, e in enumerate(rep.sup_err)]
    assert max(ratio) / max(ratio[0], 1e-300) < 1e6


def test_sector_uniformity(euler_op):
    rep = asymptotic_report(euler_op, default_grid(euler_op.kernel.delta), 10)
    rows = [np.array(v) for v in rep.by_argument.values()]
    base = np.array(rep.by_argument[f"{0.0:.12g}"])
    for row in rows:
        assert np.all(row <= 10 * base) and np.all(base <= 10 * row)


def test_partial_sum(euler_data):
    assert partial_sum(euler_data, 0.1, 3) == pytest.approx(1 - 0.1 + 0.02)


def test_linearity(closed1, closed1_moments, gev1, rng):
    from dataclasses import replace
    for _ in range(3):
        a = TruncatedSeries(rng.normal(size=9), "over-factorial")
        b = TruncatedSeries(rng.normal(size=9), "over-factorial")
        ops = [build_extension(closed1, closed1_moments, s.with_certificate(certify_norm(s, gev1)))
               for s in (a, b, a + b.scale(2.0))]
        R0 = min(op.R0 for op in ops)
        ops = [replace(op, R0=R0) for op in ops]
        z = RayPoint(0.07, 0.3)
        lhs = ops[2](z)
        rhs = ops[0](z) + 2 * ops[1](z)
        assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(rhs))


def test_derivatives(euler_op):
    out = derivative_check(euler_op, 3)
    assert all(row["pass"] for row in out)
