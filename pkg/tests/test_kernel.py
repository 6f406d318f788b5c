import math

import numpy as np
import pytest

from ultrasum.errors import (ArgumentOutsideSector, DeltaOutOfRange,
                             FlavorSequenceMismatch, SandwichNotVerified)
from ultrasum.kernel import (KernelHandle, RayPoint, build_kernel, envelope_for_ray,
                             eval_e, eval_G, eval_log_G, log_G_quadrature,
                             verify_sandwich)
from ultrasum.quad import QuadConfig, SingularityHint, integrate_finite, tail_bound
from ultrasum.seqcore import ExplicitTable, GevreyAlpha, build_sequence, log_h

GRID4 = np.logspace(-2, 2, 41)


def test_build_closed_form(gev1, closed1):
    assert eval_e(closed1, 1.0) == pytest.approx(math.exp(-1), rel=1e-15)
    k2 = build_kernel(build_sequence(GevreyAlpha(2), 64), 1.0, "gevrey")
    assert eval_e(k2, 4.0) == pytest.approx(math.exp(-2), rel=1e-14)


def test_build_defaults(gev1):
    k = build_kernel(gev1, 0.9, "constructed")
    assert k.delta1 == pytest.approx(0.95, abs=1e-12)
    assert k.s == pytest.approx((1 + 1 / 0.95) / 2, abs=1e-12)
    assert k.s * k.delta1 < 1 < k.s * k.gamma
    assert len(k.cache) == 0


def test_build_errors(gev1):
    with pytest.raises(DeltaOutOfRange):
        build_kernel(gev1, 1.2)
    table = build_sequence(ExplicitTable(tuple(math.factorial(p) * 1.0 for p in range(40))), 39)
    with pytest.raises(FlavorSequenceMismatch):
        build_kernel(table, 0.5, "gevrey")


def test_constructed_matches_oracle(constructed1, oracle):
    lg = eval_log_G(constructed1, 1.0, use_cache=False)
    assert lg.real == pytest.approx(oracle["logG_constructed_gevrey1_w1"], abs=1e-9)
    assert abs(lg.imag) <= 1e-12


@pytest.mark.parametrize("w", [0.3, 1.0, RayPoint(2.0, 0.4), RayPoint(0.7, -0.8)])
def test_quadrature_cross_check(constructed1, w):
    series = eval_log_G(constructed1, w, use_cache=False)
    quad, err = log_G_quadrature(constructed1, w)
    assert abs(series - quad) <= 1e-6


def test_positive_on_axis(constructed1):
    e = eval_e(constructed1, GRID4)
    assert np.all(e.real > 0)
    assert np.all(np.abs(e.imag) <= 1e-8 * np.abs(e))


def test_G_bounded_far_out(constructed1):
    assert np.all(np.abs(eval_G(constructed1, np.logspace(2, 6, 9))) <= 1)


def test_sector_boundary(constructed1):
    with pytest.raises(ArgumentOutsideSector):
        eval_G(constructed1, RayPoint(1.0, constructed1.delta1 * math.pi / 2))
    with pytest.raises(ArgumentOutsideSector):
        eval_e(constructed1, RayPoint(1.0, -constructed1.delta * math.pi / 2))


def test_reflection_symmetry(constructed1, closed1):
    z = np.array([0.3 + 0.2j, 1.5 - 0.4j, 7 + 1j])
    for k in (constructed1, closed1):
        a, b = eval_e(k, np.conj(z)), np.conj(eval_e(k, z))
        assert np.all(np.abs(a - b) <= 1e-9 * np.abs(b))


def test_sandwich(constructed1, closed1):
    fit = verify_sandwich(constructed1)
    assert fit.passed and max(fit.k2, fit.k3, 1 / fit.k1) <= 1e3
    assert verify_sandwich(constructed1, grid=[1.0]).passed
    assert verify_sandwich(closed1).passed


def test_upper_flatness_fit(constructed1):
    le = np.log(np.abs(eval_e(constructed1, GRID4)))
    best = None
    for j in range(-80, 81):
        K = 2 ** (j / 8)
        logC = float(np.max(le - log_h(constructed1.seq, K / GRID4)))
        if logC <= math.log(1e3) and K <= 1e3:
            best = (math.exp(logC), K)
    assert best is not None


@pytest.mark.parametrize("frac", [0.0, 0.9, -0.9])
def test_integrable_at_origin(constructed1, frac):
    tau = frac * constructed1.delta * math.pi / 2
    cfg = QuadConfig(singularity_hint=SingularityHint.LOG_AT_LEFT)
    lz = 1j * tau
    r = integrate_finite(lambda t: np.abs(np.exp(constructed1.log_e_from_log(np.log(t) + lz))) / t,
                         0.0, 1.0, cfg)
    assert r.converged and math.isfinite(r.value.real) and r.value.real > 0


def test_cache_consistency(gev1):
    k = build_kernel(gev1, 0.5)
    k.warm_cache(0.3, 1e-2, 1e4)
    lw = np.log(np.logspace(-1.9, 3.9, 777)) + 0.3j
    cached = k._log_G_from_log(lw)
    fresh = k._log_G_from_log(lw, use_cache=False)
    assert np.max(np.abs(np.expm1(cached - fresh))) <= 1e-12


def test_cache_round_trip(tmp_path, gev1):
    k = build_kernel(gev1, 0.5)
    k.warm_cache(0.0, 1e-1, 1e2)
    path = k.cache.save(tmp_path)
    assert path.name.startswith("kernel_")
    k2 = build_kernel(gev1, 0.5)
    assert k2.cache.load(tmp_path)
    lw = np.log(np.array([0.2, 3.0, 50.0])) + 0j
    assert np.array_equal(k._log_G_from_log(lw), k2._log_G_from_log(lw))
    k3 = build_kernel(gev1, 0.6)
    assert not k3.cache.load(tmp_path)


def test_cache_dir_precedence(tmp_path, monkeypatch):
    from ultrasum.kernel import cache_dir
    monkeypatch.setenv("ULTRASUM_CACHE", str(tmp_path / "env"))
    assert cache_dir() == tmp_path / "env"
    assert cache_dir(tmp_path / "flag") == tmp_path / "flag"


def test_envelopes(constructed1, closed1):
    for k in (constructed1, closed1):
        z = RayPoint(0.1, 0.2)
        verify_sandwich(k, argument=-(0.0 - z.argument))
        env = envelope_for_ray(k, z, 0.0)
        r = np.logspace(-3, 2, 60)
        vals = np.array([env(x) for x in r])
        assert np.all(np.diff(vals) <= 1e-300)
        assert math.isfinite(tail_bound(env, 0.5))
        true = np.abs(np.exp(k.log_e_from_log(np.log(r) - z.log()))) / r
        assert np.all(true <= vals * (1 + 1e-9))


def test_envelope_needs_sandwich(gev1):
    k = build_kernel(gev1, 0.5)
    with pytest.raises(SandwichNotVerified):
        envelope_for_ray(k, RayPoint(0.1, 0.3), 0.0)


def test_closed_form_envelope_decay(closed1):
    env = envelope_for_ray(closed1, RayPoint(0.1), 0.0)
    for p in (2, 5, 10):
        assert env(50.0) * 50.0 ** p < 1e-100


def test_scaled_hurwitz_matches_scipy():
    from scipy.special import zeta
    from ultrasum.kernel import scaled_hurwitz
    sig = np.array([1.5, 3.0, 7.0, 21.0])
    for N in (1.0, 5.0, 40.0, 300.0):
        ref = N ** sig * zeta(sig, N)
        assert np.allclose(scaled_hurwitz(sig, N), ref, rtol=1e-12)
