"""Acceptance criteria 1-10, each with its tolerance and runtime limit.

Every test prints one ``criterion N PASS|FAIL`` line (collected again in the
terminal summary) before asserting.
"""
import math
import time

import numpy as np
import pytest
from scipy.special import gammaln

from conftest import ACCEPTANCE_LINES
from ultrasum.extend import asymptotic_report, build_extension, derivative_check
from ultrasum.formal import TruncatedSeries, certify_norm, formal_borel, formal_laplace
from ultrasum.kernel import RayPoint, build_kernel, eval_e, verify_sandwich
from ultrasum.moments import moment, moment_table
from ultrasum.seqcore import GevreyAlpha, build_sequence, watson_diagnostic
from ultrasum.summation import (builtin_continuation, direction_independence, flat_gap,
                                m_sum)


def report(n, ok, elapsed, limit, detail):
    passed = bool(ok) and elapsed <= limit
    line = (f"criterion {n} {'PASS' if passed else 'FAIL'} "
            f"({elapsed:.2f}s of {limit:g}s) {detail}")
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, detail
    assert elapsed <= limit, f"runtime {elapsed:.2f}s exceeds {limit}s"


def euler_data(seq, N=64):
    s = TruncatedSeries([(-1) ** p * math.factorial(p) ** 2 for p in range(N + 1)],
                        "over-factorial")
    return s.with_certificate(certify_norm(s, seq))


def test_criterion_01_gevrey_moments():
    t0 = time.perf_counter()
    worst = 0.0
    for alpha in (0.5, 1.0, 2.0):
        # gamma(M) = alpha for Gevrey sequences
        k = build_kernel(build_sequence(GevreyAlpha(alpha), 64), 0.5 * alpha, "gevrey")
        for p in range(16):
            m = moment(k, p)
            ref = math.exp(gammaln(1 + alpha * p))
            worst = max(worst, abs(m - ref) / ref)
    report(1, worst <= 1e-8, time.perf_counter() - t0, 10,
           f"max rel err {worst:.2e} (tol 1e-8)")


def test_criterion_02_round_trip():
    rng = np.random.default_rng(12345)
    t0 = time.perf_counter()
    worst = 0.0
    m_all = np.exp(gammaln(np.arange(65) + 1.0))
    for _ in range(100):
        N = int(rng.integers(0, 65))
        c = rng.normal(size=N + 1) * 10.0 ** rng.uniform(-5, 5, N + 1)
        c = c + 1j * rng.normal(size=N + 1) * 10.0 ** rng.uniform(-5, 5, N + 1)
        s = TruncatedSeries(c)
        back = formal_laplace(formal_borel(s, m_all), m_all).coeffs
        worst = max(worst, float(np.max(np.abs(back - c) / np.abs(c))))
    report(2, worst <= 1e-12, time.perf_counter() - t0, 1,
           f"max rel coefficient err {worst:.2e} (tol 1e-12)")


def test_criterion_03_constructed_sanity():
    t0 = time.perf_counter()
    k = build_kernel(build_sequence(GevreyAlpha(1.0), 64), 0.5, "constructed")
    k.warm_cache(0.0)
    x = np.logspace(-2, 2, 81)
    e = eval_e(k, x)
    im = float(np.max(np.abs(e.imag) / np.abs(e)))
    fit = verify_sandwich(k, grid=x)
    consts = [fit.k2, fit.k3, 1 / fit.k1] if fit.passed else [math.inf]
    ok = im <= 1e-8 and fit.passed and max(consts) <= 1e3
    report(3, ok, time.perf_counter() - t0, 60,
           f"max |Im e|/|e| {im:.1e}; sandwich k1={fit.k1:.3g} k2={fit.k2:.3g} k3={fit.k3:.3g}")


def test_criterion_04_moment_equivalence():
    t0 = time.perf_counter()
    k = build_kernel(build_sequence(GevreyAlpha(1.0), 64), 0.5, "constructed")
    t = moment_table(k, 20)
    eq = t.equivalence
    C, D = eq["offset_C"], eq["step_bound_D"]
    p = np.arange(21)
    ratio = t.m / np.exp(gammaln(p + 1.0))
    bounds = bool(np.all(ratio <= C * D ** p * (1 + 1e-12))
                  and np.all(ratio >= (1 - 1e-12) / (C * D ** p)))
    ok = math.isfinite(C) and D <= 1e3 and bounds and t.logconvex
    report(4, ok, time.perf_counter() - t0, 120,
           f"C={C:.3g} D={D:.3g}, log-convex={t.logconvex}")


def test_criterion_05_borel_ritt():
    t0 = time.perf_counter()
    seq = build_sequence(GevreyAlpha(1.0), 64)
    k = build_kernel(seq, 0.5, "gevrey")
    op = build_extension(k, moment_table(k, 64), euler_data(seq))
    rep = asymptotic_report(op, [RayPoint(r) for r in (0.02, 0.05, 0.1)], 12)
    ders = derivative_check(op, 3)
    worst = max(d["rel_err"] for d in ders)
    ok = rep.pass_ and rep.residual <= math.log(10) and worst <= 1e-3
    report(5, ok, time.perf_counter() - t0, 60,
           f"fit C={rep.fitted['C']:.3g} D={rep.fitted['D']:.3g} residual "
           f"{rep.residual:.3f} <= log 10; derivative rel err {worst:.1e}")


def test_criterion_06_euler_oracle(oracle):
    t0 = time.perf_counter()
    seq = build_sequence(GevreyAlpha(1.0), 64)
    k = build_kernel(seq, 0.5, "gevrey")
    mt = moment_table(k, 64)
    ref = oracle["e10_E1_10"]
    # classical Euler series sum (-1)^n n! z^{n+1}, Borel transform log(1+u)
    classical = TruncatedSeries([0.0] + [(-1) ** (n - 1) * math.factorial(n - 1)
                                         for n in range(1, 65)])
    v = m_sum(k, mt, classical, builtin_continuation("log_one_plus_u", seq), [0.1],
              tau=0.0).values[0]
    # plain form sum (-1)^n n! z^n with 1/(1+u): the same integral divided by z
    plain = TruncatedSeries([(-1) ** n * math.factorial(n) for n in range(65)])
    w = m_sum(k, mt, plain, builtin_continuation("one_over_one_plus_u", seq), [0.1],
              tau=0.0).values[0]
    ok = abs(v - ref) <= 1e-6 and abs(w - ref / 0.1) <= 1e-6 / 0.1
    report(6, ok, time.perf_counter() - t0, 5,
           f"m_sum {v.real:.10f} vs e^10 E1(10) {ref:.10f} (|err| {abs(v - ref):.1e}); "
           f"plain-convention value {w.real:.10f} = oracle/z")


def test_criterion_07_convergent():
    t0 = time.perf_counter()
    seq = build_sequence(GevreyAlpha(1.0), 64)
    k = build_kernel(seq, 0.5, "gevrey")
    run = m_sum(k, moment_table(k, 64), TruncatedSeries(np.ones(65)),
                builtin_continuation("exp", seq), [0.3], tau=0.0)
    v = run.values[0]
    report(7, abs(v - 1 / 0.7) <= 1e-6, time.perf_counter() - t0, 5,
           f"value {v.real:.10f} vs 1/0.7 (|err| {abs(v - 1 / 0.7):.1e})")


def test_criterion_08_direction_independence():
    t0 = time.perf_counter()
    seq = build_sequence(GevreyAlpha(1.0), 64)
    k = build_kernel(seq, 0.5, "gevrey")
    g = builtin_continuation("one_over_one_plus_u", seq)
    chk = direction_independence(k, g, 0.0, 0.1, RayPoint(0.1, 0.05))
    report(8, chk.ok, time.perf_counter() - t0, 10,
           f"residual {chk.residual:.1e} vs 10 x budget {10 * chk.error_budget:.1e}")


def test_criterion_09_flat_gap():
    t0 = time.perf_counter()
    seq = build_sequence(GevreyAlpha(1.0), 64)
    k = build_kernel(seq, 0.5, "gevrey")
    op = build_extension(k, moment_table(k, 64), euler_data(seq))
    rep = flat_gap(op, builtin_continuation("one_over_one_plus_u", seq),
                   [0.2, 0.1, 0.05, 0.02])
    r6 = rep.ratios["6"]
    report(9, rep.decreasing, time.perf_counter() - t0, 60,
           "gap/|z|^6 = " + ", ".join(f"{x:.3g}" for x in r6))


def test_criterion_10_watson():
    t0 = time.perf_counter()
    g1 = build_sequence(GevreyAlpha(1.0), 64)
    g2 = build_sequence(GevreyAlpha(2.0), 64)
    got = [watson_diagnostic(g1, 1.0).verdict, watson_diagnostic(g2, 1.0).verdict,
           watson_diagnostic(g2, 2.0).verdict]
    want = ["Divergent", "Convergent", "Divergent"]
    report(10, got == want, time.perf_counter() - t0, 1, f"verdicts {got}")
