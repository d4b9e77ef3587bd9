"""Distribution sampling and parameter validation."""

import math
from random import Random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rtlos.distributions import ConfigError, ServiceDistribution


class TestValidation:
    def test_exponential_needs_positive_mean(self):
        with pytest.raises(ConfigError):
            ServiceDistribution.exponential(0)

    def test_uniform_needs_ordered_bounds(self):
        with pytest.raises(ConfigError):
            ServiceDistribution.uniform(5, 2)
        with pytest.raises(ConfigError):
            ServiceDistribution.uniform(-1, 2)

    def test_gaussian_needs_positive_params(self):
        with pytest.raises(ConfigError):
            ServiceDistribution.gaussian(0.87, 0)
        with pytest.raises(ConfigError):
            ServiceDistribution.gaussian(-1, 0.2)


class TestMean:
    def test_uniform_midpoint(self):
        assert ServiceDistribution.uniform(2, 5).mean() == pytest.approx(3.5)

    def test_gaussian_mu(self):
        # truncation bias deliberately ignored
        assert ServiceDistribution.gaussian(0.87, 0.21).mean() == pytest.approx(0.87)

    def test_exponential_mean(self):
        assert ServiceDistribution.exponential(2880).mean() == pytest.approx(2880)


class TestSampling:
    def test_uniform_within_support(self):
        dist = ServiceDistribution.uniform(2, 5)
        rng = Random(7)
        assert all(2 <= dist.sample(rng) <= 5 for _ in range(2000))

    def test_gaussian_truncated_positive(self):
        # heavy mass below zero without rejection
        dist = ServiceDistribution.gaussian(0.5, 1.0)
        rng = Random(11)
        assert all(dist.sample(rng) > 0 for _ in range(5000))

    @pytest.mark.slow
    def test_empirical_moments_within_three_se(self):
        n = 10 ** 6
        cases = [
            ServiceDistribution.exponential(9),
            ServiceDistribution.uniform(2, 5),
            ServiceDistribution.gaussian(2.08, 0.72),
        ]
        for dist in cases:
            rng = Random(12345)
            total = 0.0
            total2 = 0.0
            for _ in range(n):
                x = dist.sample(rng)
                total += x
                total2 += x * x
            mean = total / n
            var = total2 / n - mean * mean
            se_mean = math.sqrt(dist.variance() / n)
            assert abs(mean - dist.mean()) <= 3 * se_mean + 1e-3, dist
            # variance check with a generous standard-error proxy
            se_var = dist.variance() * math.sqrt(2.0 / n) * 3.0
            assert abs(var - dist.variance()) <= 10 * se_var + 5e-3, dist

    def test_exponential_mean_large_sample(self):
        dist = ServiceDistribution.exponential(9)
        rng = Random(99)
        n = 10 ** 6
        mean = sum(dist.sample(rng) for _ in range(n)) / n
        assert mean == pytest.approx(9.0, abs=0.05)


class TestCdf:
    @given(st.floats(0, 10))
    @settings(max_examples=50, deadline=None)
    def test_uniform_cdf_monotone_bounded(self, x):
        dist = ServiceDistribution.uniform(2, 5)
        assert 0.0 <= dist.cdf(x) <= 1.0

    def test_gaussian_cdf_median(self):
        assert ServiceDistribution.gaussian(3.45, 0.83).cdf(3.45) == pytest.approx(0.5)


class TestParseRoundTrip:
    @pytest.mark.parametrize("text,kind", [
        ("exp(9)", "exp"),
        ("uniform(2,5)", "uniform"),
        ("gaussian(0.87,0.21)", "gaussian"),
        ("N(3.45, 0.83)", "gaussian"),
        ("U(10, 30)", "uniform"),
    ])
    def test_parse(self, text, kind):
        assert ServiceDistribution.parse(text).kind == kind

    def test_round_trip(self):
        for d in (ServiceDistribution.exponential(9),
                  ServiceDistribution.uniform(2, 5),
                  ServiceDistribution.gaussian(0.87, 0.21)):
            assert ServiceDistribution.parse(d.spec()) == d

    @pytest.mark.parametrize("bad", ["exp()", "uniform(2)", "wat(1,2)",
                                     "gaussian(a,b)", "exp(1,2)"])
    def test_parse_errors(self, bad):
        with pytest.raises(ConfigError):
            ServiceDistribution.parse(bad)
