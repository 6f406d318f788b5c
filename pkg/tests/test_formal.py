import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ultrasum.errors import MomentTableTooShort, OutsideGuard, ZeroSeries
from ultrasum.formal import (NormCertificate, TruncatedSeries, certify_norm,
                             check_certificate, eval_truncated, formal_borel,
                             formal_laplace)

FACT = np.array([math.factorial(p) for p in range(70)], dtype=float)


def test_borel_of_factorial_series():
    s = TruncatedSeries(FACT[:11])
    assert np.array_equal(formal_borel(s, FACT).coeffs, np.ones(11))
    assert np.allclose(formal_laplace(TruncatedSeries(np.ones(11)), FACT).coeffs, FACT[:11])


def test_zero_series_maps_to_zero():
    z = TruncatedSeries(np.zeros(5))
    assert formal_borel(z, FACT).is_zero() and formal_laplace(z, FACT).is_zero()


def test_euler_borel_exact(closed1_moments):
    # (-1)^p (p!)^2 as derivatives -> plain (-1)^p p! -> Borel (-1)^p
    s = TruncatedSeries([(-1) ** p * math.factorial(p) ** 2 for p in range(11)],
                        "over-factorial")
    plain = s.to_plain()
    assert np.allclose(plain.coeffs.real, [(-1) ** p * math.factorial(p) for p in range(11)],
                       rtol=1e-14)
    b = formal_borel(plain, closed1_moments)
    assert np.allclose(b.coeffs, [(-1) ** p for p in range(11)], rtol=1e-9)


def test_moment_table_too_short():
    with pytest.raises(MomentTableTooShort):
        formal_borel(TruncatedSeries(np.ones(10)), FACT[:5])


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 64), st.integers(0, 2 ** 32 - 1))
def test_round_trip(N, seed):
    rng = np.random.default_rng(seed)
    c = rng.normal(size=N + 1) + 1j * rng.normal(size=N + 1)
    m = np.exp(rng.uniform(-5, 30, size=N + 1))
    s = TruncatedSeries(c)
    back = formal_laplace(formal_borel(s, m), m).coeffs
    assert np.all(np.abs(back - c) <= 1e-12 * np.abs(c))


def test_linearity_exact(rng):
    a, b = TruncatedSeries(rng.normal(size=9)), TruncatedSeries(rng.normal(size=9))
    lhs = formal_borel(a + b, FACT).coeffs
    assert np.allclose(lhs, formal_borel(a, FACT).coeffs + formal_borel(b, FACT).coeffs,
                       rtol=1e-15)


def test_convention_round_trip(rng):
    c = rng.normal(size=30)
    s = TruncatedSeries(c)
    assert np.allclose(s.to_over_factorial().to_plain().coeffs, c, rtol=1e-13)


def test_certificate_examples(gev1):
    s = TruncatedSeries([math.factorial(p) ** 2 for p in range(21)], "over-factorial")
    cert = certify_norm(s, gev1)
    assert cert.A == 1 and cert.C == pytest.approx(1, rel=1e-12)
    s = TruncatedSeries([2.0 ** p * math.factorial(p) ** 2 for p in range(21)],
                        "over-factorial")
    cert = certify_norm(s, gev1)
    assert cert.A == pytest.approx(2, rel=1e-12) and cert.C == pytest.approx(1, rel=1e-12)
    with pytest.raises(ZeroSeries):
        certify_norm(TruncatedSeries(np.zeros(4)), gev1)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_certificate_bounded_perturbation(seed):
    from ultrasum.seqcore import GevreyAlpha, build_sequence
    seq = build_sequence(GevreyAlpha(1), 40)
    rng = np.random.default_rng(seed)
    eps = rng.uniform(-1, 1, 41)
    s = TruncatedSeries(eps * FACT[:41] ** 2, "over-factorial")
    if s.is_zero():
        return
    cert = certify_norm(s, seq)
    assert cert.A == 1 and cert.C <= 1 + 1e-12
    assert check_certificate(s, seq, cert)


def test_certificate_recheck_rejects(gev1):
    s = TruncatedSeries([math.factorial(p) ** 2 * 3 for p in range(10)], "over-factorial")
    assert not check_certificate(s, gev1, NormCertificate(1.0, 1.0))


def test_eval_truncated():
    s = TruncatedSeries(np.ones(51))
    assert eval_truncated(s, 0.5) == pytest.approx(2 - 0.5 ** 50, rel=1e-15)
    s = TruncatedSeries([3 + 1j, 5, 7])
    assert eval_truncated(s, 0) == 3 + 1j
    assert eval_truncated(TruncatedSeries([4.0]), 1e3) == 4
    with pytest.raises(OutsideGuard):
        eval_truncated(s, 2.0, radius_guard=1.0)


def test_order_limit_and_io():
    with pytest.raises(ValueError):
        TruncatedSeries(np.ones(600))
    s = TruncatedSeries([1 + 2j, 3], "over-factorial")
    t = TruncatedSeries.from_dict(s.to_dict())
    assert t.convention == "over-factorial" and np.array_equal(t.coeffs, s.coeffs)
    with pytest.raises(ValueError):
        s.coeffs[0] = 0
