import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, special, stats

from stablemax.stable_core import (
    FrechetLaw,
    RandomStream,
    StabilityIndex,
    c_alpha,
    d_alpha,
    frechet_cdf,
    frechet_quantile,
    gaussian_abs_moment,
    poisson_arrivals,
    sample_positive_stable,
    sample_sas,
)

alphas = st.floats(min_value=0.05, max_value=1.95, allow_nan=False)


def test_c_alpha_at_one():
    assert c_alpha(1.0) == pytest.approx(2.0 / math.pi, abs=1e-15)
    assert c_alpha(1.0) == pytest.approx(0.63662, abs=1e-5)


def test_c_alpha_half_matches_quadrature():
    closed = 0.5 / (special.gamma(1.5) * math.cos(math.pi / 4))
    # int_0^inf x^-1/2 sin x dx by an oscillatory-weight quadrature
    head, _ = integrate.quad(lambda x: x**-0.5 * math.sin(x), 0, 1, limit=200)
    tail, _ = integrate.quad(lambda x: x**-0.5, 1, np.inf, weight="sin", wvar=1.0)
    assert c_alpha(0.5) == pytest.approx(closed, rel=1e-13)
    assert c_alpha(0.5) == pytest.approx(1.0 / (head + tail), rel=1e-8)


@pytest.mark.parametrize("h", [1e-6, 1e-3])
def test_c_alpha_continuous_at_one(h):
    # the slope at 1 is about 0.37
    for a in (1 + h, 1 - h):
        assert abs(c_alpha(a) - 2 / math.pi) < 0.5 * h


def test_c_alpha_interpolation_matches_closed_form_near_band():
    from stablemax.stable_core import _c_alpha_closed

    for a in (1 - 0.9999e-4, 1 + 0.9999e-4, 1 + 5e-5):
        assert c_alpha(a) == pytest.approx(_c_alpha_closed(a), rel=1e-9)


@given(alphas)
def test_c_alpha_positive(a):
    assert c_alpha(a) > 0


@pytest.mark.parametrize("bad", [0.0, 2.0, -1.0, float("nan")])
def test_bad_alpha_rejected(bad):
    with pytest.raises(ValueError):
        c_alpha(bad)
    with pytest.raises(ValueError):
        StabilityIndex(bad)


def test_stability_index_conjugate():
    assert StabilityIndex(1.5).conjugate == pytest.approx(3.0)
    assert float(StabilityIndex(0.7)) == 0.7


def test_frechet_cdf_unit_points():
    assert frechet_cdf(FrechetLaw(1.0, 1.0), 1.0) == pytest.approx(math.exp(-1))
    assert frechet_cdf(FrechetLaw(2.0, 3.0), 3.0) == pytest.approx(math.exp(-1))
    assert frechet_cdf(FrechetLaw(1.5, 1.0), 1e300) == 1.0
    assert frechet_cdf(FrechetLaw(1.5, 1.0), 0.0) == 0.0
    assert frechet_cdf(FrechetLaw(1.5, 1.0), -2.0) == 0.0


def test_frechet_quantile_unit_points():
    assert frechet_quantile(FrechetLaw(1.0, 1.0), 0.5) == pytest.approx(1.0 / math.log(2.0))
    assert frechet_quantile(FrechetLaw(2.0, 1.0), math.exp(-1)) == pytest.approx(1.0)
    p = np.linspace(0.01, 0.99, 99)
    law = FrechetLaw(1.3, 0.7)
    np.testing.assert_allclose(frechet_cdf(law, frechet_quantile(law, p)), p, rtol=1e-12)


@given(alphas, st.floats(0.01, 100.0), st.floats(1e-3, 1e3))
def test_frechet_quantile_inverts_cdf(a, scale, z):
    law = FrechetLaw(a, scale)
    p = frechet_cdf(law, z)
    # away from p = 1 the round trip keeps 10 significant digits
    if 1e-300 < p < 1 - 1e-4:
        assert frechet_quantile(law, p) == pytest.approx(z, rel=1e-10)


def test_frechet_law_rejects_bad_parameters():
    with pytest.raises(ValueError):
        FrechetLaw(0.0, 1.0)
    with pytest.raises(ValueError):
        FrechetLaw(1.0, -1.0)


def test_frechet_sample_matches_cdf():
    law = FrechetLaw(1.2, 2.0)
    x = law.sample(20_000, RandomStream(3))
    assert stats.kstest(x, law.cdf).statistic < 0.015


def test_sas_symmetric_median():
    x = sample_sas(1.3, 1.0, RandomStream(11), size=100_000)
    # the median of a symmetric law has s.e. 1/(2 f(0) sqrt(N)); f(0) > 0.2 here
    assert abs(np.median(x)) < 3 * 0.5 / (0.2 * math.sqrt(x.size))


@pytest.mark.slow
@pytest.mark.parametrize("alpha", [0.8, 1.5])
def test_sas_tail_constant(alpha):
    # P(|X| > x) ~ C_alpha x^-alpha for unit scale
    x = sample_sas(alpha, 1.0, RandomStream(12), size=1_000_000)
    thr = 50.0 if alpha < 1 else 20.0
    p = np.mean(np.abs(x) > thr)
    se = math.sqrt(p * (1 - p) / x.size)
    assert abs(p * thr**alpha - c_alpha(alpha)) < 4 * se * thr**alpha + 0.03 * c_alpha(alpha)


def test_sas_scaling_same_stream():
    a = sample_sas(1.1, 1.0, RandomStream(5, 2, ("x",)), size=1000)
    b = sample_sas(1.1, 3.5, RandomStream(5, 2, ("x",)), size=1000)
    np.testing.assert_allclose(b, 3.5 * a, rtol=1e-14)


def test_sas_scaling_in_law():
    a = 2.0 * sample_sas(1.4, 1.0, RandomStream(1), size=100_000)
    b = sample_sas(1.4, 2.0, RandomStream(2), size=100_000)
    assert stats.ks_2samp(a, b).statistic < 0.02


def test_sas_alpha_one_is_cauchy():
    x = sample_sas(1.0, 1.0, RandomStream(8), size=50_000)
    assert stats.kstest(x, stats.cauchy.cdf).statistic < 0.012


def test_sas_near_two_is_gaussian_like():
    # scale s at alpha = 2 is N(0, 2 s^2); alpha = 1.999 is close to it in the bulk
    x = sample_sas(1.999, 1.0, RandomStream(9), size=50_000)
    assert stats.kstest(x, stats.norm(scale=math.sqrt(2)).cdf).statistic < 0.015


@pytest.mark.parametrize("half_alpha", [0.35, 0.6, 0.9])
def test_positive_stable_laplace_transform(half_alpha):
    a = sample_positive_stable(half_alpha, RandomStream(21), size=100_000)
    assert np.all(a > 0)
    for theta in (1.0, 4.0):
        y = np.exp(-theta * a)
        target = math.exp(-(theta**half_alpha))
        assert abs(y.mean() - target) < 3 * y.std() / math.sqrt(y.size)


def test_positive_stable_rejects_bad_index():
    with pytest.raises(ValueError):
        sample_positive_stable(1.0, RandomStream(1), size=3)


def test_poisson_arrivals_properties():
    g = poisson_arrivals(5, RandomStream(4), size=10_000)
    assert g.shape == (10_000, 5)
    assert np.all(np.diff(g, axis=1) > 0)
    m = g[:, 4]
    assert abs(m.mean() - 5) < 3 * m.std() / math.sqrt(m.size)
    p = np.mean(g[:, 0] > 1.0)
    assert abs(p - math.exp(-1)) < 3 * math.sqrt(p * (1 - p) / g.shape[0])


def test_poisson_increments_exponential():
    g = poisson_arrivals(10, RandomStream(6), size=10_000)
    inc = np.diff(np.concatenate([np.zeros((g.shape[0], 1)), g], axis=1), axis=1).ravel()
    assert stats.kstest(inc, stats.expon.cdf).statistic < 0.02


def test_gaussian_abs_moment_values():
    assert gaussian_abs_moment(2.0) == pytest.approx(1.0, rel=1e-14)
    assert gaussian_abs_moment(1.0) == pytest.approx(math.sqrt(2 / math.pi), rel=1e-14)
    assert gaussian_abs_moment(1.3, "quad") == pytest.approx(gaussian_abs_moment(1.3), rel=1e-9)
    z = RandomStream(13).generator().standard_normal(1_000_000)
    y = np.abs(z) ** 1.3
    assert abs(y.mean() - gaussian_abs_moment(1.3, "quad")) < 3 * y.std() / math.sqrt(y.size)


def test_d_alpha():
    assert d_alpha(1.0) == pytest.approx(math.sqrt(2) * math.sqrt(2 / math.pi))
    assert d_alpha(1.9999999) == pytest.approx(math.sqrt(2), rel=1e-6)


def test_streams_reproducible_and_distinct():
    s = RandomStream(42, 3, ("a", 1))
    np.testing.assert_array_equal(s.generator().random(5), RandomStream(42, 3, ("a", 1)).generator().random(5))
    draws = {
        tuple(x.generator().random(3))
        for x in (s, s.child("b"), s.replicate(4), RandomStream(43, 3, ("a", 1)), RandomStream(42, 3, ("a", 2)))
    }
    assert len(draws) == 5


@pytest.mark.parametrize("seed", [-1, 2**64])
def test_stream_seed_range(seed):
    with pytest.raises(ValueError):
        RandomStream(seed)
