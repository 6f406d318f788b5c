import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ultrasum.errors import (M0NotOne, NegativeArgument, NonPositiveEntry,
                             OverflowAtIndex, TableTooShort, WindowTooSmall)
from ultrasum.seqcore import (ExplicitTable, GevreyAlpha, build_sequence,
                              check_regularity, check_rho_property, estimate_gamma,
                              eval_h, log_h, sequence_from_spec, watson_diagnostic)


def brute_h(logs, t):
    p = np.arange(logs.size)
    return float(np.exp(np.min(logs + p * math.log(t))))


def test_gevrey_values():
    assert np.allclose(build_sequence(GevreyAlpha(1), 5).values, [1, 1, 2, 6, 24, 120])
    assert np.allclose(build_sequence(GevreyAlpha(2), 3).values, [1, 1, 4, 36])


def test_gevrey_values_match_factorial_power():
    seq = build_sequence(GevreyAlpha(1.5), 60)
    ref = np.array([math.factorial(p) ** 1.5 for p in range(61)])
    assert np.allclose(seq.values, ref, rtol=1e-13, atol=0)


@pytest.mark.parametrize("vals,err", [((1, -1, 2), NonPositiveEntry),
                                      ((2, 3, 4), M0NotOne),
                                      ((1, 0, 2), NonPositiveEntry)])
def test_table_errors(vals, err):
    with pytest.raises(err):
        build_sequence(ExplicitTable(vals), 2)


def test_table_too_short():
    with pytest.raises(TableTooShort):
        build_sequence(ExplicitTable((1, 1, 2)), 5)
    with pytest.raises(TableTooShort):
        build_sequence(GevreyAlpha(1), 1)


def test_overflow_only_in_linear_domain():
    seq = build_sequence(GevreyAlpha(1), 400)
    assert np.isfinite(seq.log_values).all()
    with pytest.raises(OverflowAtIndex) as exc:
        seq.values
    assert exc.value.index == 171


def test_model_is_read_only(gev1):
    with pytest.raises(ValueError):
        gev1.log_values[0] = 1.0


def test_regularity_gevrey1(gev1):
    rep = check_regularity(gev1)
    assert rep.logconvex_pass
    A = rep.moderate_growth["fitted_A"]
    assert 1 <= A <= 2
    # brute force (p+l)! <= A^{p+l} p! l!
    L = gev1.log_values
    for n in range(65):
        for p in range(n + 1):
            assert L[n] <= n * math.log(A) + L[p] + L[n - p] + 1e-9
    assert rep.strong_nq["pass"] is True
    assert rep.strongly_regular


def test_regularity_constant_table():
    seq = build_sequence(ExplicitTable(tuple([1.0] * 129)), 128)
    rep = check_regularity(seq, 30)
    assert rep.logconvex_pass
    assert rep.strong_nq["pass"] is False


def test_regularity_gevrey2(gev2):
    assert check_regularity(gev2).logconvex_pass


def test_regularity_geometric_table_fails_moderate_growth():
    vals = tuple(2.0 ** (p * (p - 1) / 2) for p in range(33))
    rep = check_regularity(build_sequence(ExplicitTable(vals), 32))
    assert rep.logconvex_pass and not rep.moderate_growth["pass"]


def test_regularity_flat_keys(gev1):
    flat = check_regularity(gev1).flat()
    for key in ("logconvex_pass", "moderate_growth.fitted_A", "strong_nq.fitted_B",
                "strong_nq.tail_depth", "gamma_estimate", "gamma_method",
                "watson.verdict", "watson.partial_sum", "watson.terms"):
        assert key in flat


def test_tail_depth_validation(gev1):
    with pytest.raises(ValueError):
        check_regularity(gev1, 63)


def test_eval_h_examples(gev1):
    assert eval_h(gev1, 0).value == 0
    assert eval_h(gev1, 1.7).value == 1
    assert eval_h(gev1, 0.5).value == pytest.approx(0.5, rel=1e-14)
    with pytest.raises(NegativeArgument):
        eval_h(gev1, -1e-3)


def test_eval_h_matches_brute_force():
    seq = build_sequence(GevreyAlpha(1), 200)
    logs = np.array(seq.log_values)
    for t in np.logspace(-1.9, 0.5, 57):
        h = eval_h(seq, t)
        assert not h.truncated
        assert h.value == pytest.approx(brute_h(logs, t), rel=1e-10)


def test_eval_h_truncation_flag(gev1):
    assert eval_h(gev1, 1e-3).truncated


def test_eval_h_monotone(gev2):
    t = np.logspace(-4, 1, 400)
    v = np.exp(log_h(gev2, t))
    assert np.all(np.diff(v) >= 0)
    assert np.all(v[t >= 1.0] == 1.0)


def test_gamma_estimates():
    g = estimate_gamma(build_sequence(GevreyAlpha(2), 512))
    assert g.gamma == pytest.approx(2.0, abs=1e-6) and g.method == "QuotientSlope"
    assert estimate_gamma(build_sequence(GevreyAlpha(1), 128)).gamma == pytest.approx(1, abs=1e-6)
    o = estimate_gamma(build_sequence(GevreyAlpha(1), 64, gamma_override=1.37))
    assert o == (1.37, "Override")
    with pytest.raises(WindowTooSmall):
        estimate_gamma(build_sequence(GevreyAlpha(1), 2))


def test_rho_property(gev1):
    assert check_rho_property(gev1, 1).rho_fitted == 1
    fit = check_rho_property(gev1, 2, grid=np.logspace(-3, 0, 61))
    assert fit.passed and fit.rho_fitted >= 1
    flat = build_sequence(ExplicitTable(tuple([1.0] * 65)), 64)
    assert check_rho_property(flat, 2).rho_fitted >= 1


@pytest.mark.parametrize("alpha,gamma,verdict", [(1, 1, "Divergent"), (2, 1, "Convergent"),
                                                 (2, 2, "Divergent"), (1, 2, "Divergent")])
def test_watson(alpha, gamma, verdict):
    seq = build_sequence(GevreyAlpha(alpha), 64)
    assert watson_diagnostic(seq, gamma).verdict == verdict


def test_sequence_from_spec():
    seq = sequence_from_spec({"kind": "gevrey", "alpha": 2, "pmax": 10})
    assert seq.pmax == 10 and seq.is_gevrey
    seq = sequence_from_spec({"kind": "table", "values": [1, 1, 2, 6, 24]}, pmax=3)
    assert seq.pmax == 3
    with pytest.raises(ValueError):
        sequence_from_spec({"kind": "weird"})


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=3, max_size=40))
def test_logconvex_matches_pairwise(steps):
    logs = np.concatenate([[0.0], np.cumsum(steps)])
    seq = build_sequence(ExplicitTable(tuple(np.exp(logs))), len(steps))
    rep = check_regularity(seq, 0)
    brute = all(2 * logs[p] <= logs[p - 1] + logs[p + 1] + 1e-12 * max(1, abs(2 * logs[p]))
                for p in range(1, len(logs) - 1))
    assert rep.logconvex_pass == brute


@settings(max_examples=25, deadline=None)
@given(st.floats(0.3, 3.0))
def test_gevrey_structural_inequalities(alpha):
    seq = build_sequence(GevreyAlpha(alpha), 48)
    L = np.array(seq.log_values)
    A = check_regularity(seq).moderate_growth["fitted_A"]
    lq = np.diff(L)
    for n in range(49):
        for p in range(n + 1):
            assert L[n] >= L[p] + L[n - p] - 1e-9
    for p in range(1, 48):
        assert L[p] / p <= lq[p] + 1e-12
        assert lq[p] <= 2 * math.log(A) + L[p] / p + 1e-9
