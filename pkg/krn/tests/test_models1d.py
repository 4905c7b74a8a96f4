"""
Tests for one-dimensional measures and the Gaussian kernel family.
"""
import math

import numpy as np
import pytest
from scipy import stats

from errors import InvalidArgument
from models1d import (
    exact_gaussian_posterior,
    gaussian_kernel,
    normal,
    parse_measure,
    posterior_tail_query,
)


class TestNormal:
    """Normal measures built on the complementary error function."""

    def test_cdf_and_density(self):
        """CDF and density agree with scipy."""
        mu = normal(0.5, 2.0)
        xs = np.linspace(-4, 4, 17)
        assert np.allclose(mu.cdf(xs), stats.norm.cdf(xs, 0.5, math.sqrt(2.0)))
        assert np.allclose(mu.density(xs), stats.norm.pdf(xs, 0.5, math.sqrt(2.0)))

    def test_cdf_at_one(self):
        """Phi(1) to ten decimal places."""
        phi_one = float(normal(0, 1).cdf(1.0))
        assert phi_one == pytest.approx(0.8413447460685429, abs=1e-10)
        assert float(normal(2, 4).cdf(2.0)) == 0.5

    def test_cdf_is_monotone(self):
        """The CDF never decreases along a grid."""
        values = normal(0.25, 0.5).cdf(np.linspace(-12, 12, 4001))
        assert np.all(np.diff(values) >= 0)
        assert values[0] == pytest.approx(0.0, abs=1e-9)
        assert values[-1] == pytest.approx(1.0, abs=1e-9)

    @pytest.mark.parametrize("h", [1e-5, 1e-6])
    def test_density_is_derivative_of_cdf(self, h):
        """Central differences of the CDF reproduce the density."""
        mu = normal(-0.5, 2.0)
        xs = np.linspace(-5, 5, 41)
        slopes = (mu.cdf(xs + h) - mu.cdf(xs - h)) / (2 * h)
        assert np.max(np.abs(slopes - mu.density(xs))) <= 1e-6

    def test_upper_tail_keeps_precision(self):
        """Far upper-tail masses come from the survival function."""
        mu = normal(0, 1)
        mass = float(mu.interval_mass(9.0, 10.0))
        expected = stats.norm.sf(9.0) - stats.norm.sf(10.0)
        assert mass > 0
        assert mass == pytest.approx(expected, rel=1e-10)

    def test_interval_mass_broadcasts(self):
        """Masses of consecutive cells add up to one."""
        edges = np.array([-np.inf, -1.0, 0.0, 1.0, np.inf])
        masses = normal(0, 1).interval_mass(edges[:-1], edges[1:])
        assert masses.sum() == pytest.approx(1.0)
        assert masses[1] == pytest.approx(masses[2])

    def test_descriptor(self):
        """Measures print as tag:mean:variance."""
        assert str(normal(0, 1)) == "normal:0:1"
        assert str(normal(0.25, 0.5)) == "normal:0.25:0.5"

    @pytest.mark.parametrize("mean,variance", [(0, 0), (0, -1), (math.inf, 1), (0, math.nan)])
    def test_invalid_parameters(self, mean, variance):
        """Variance must be positive and both parameters finite."""
        with pytest.raises(InvalidArgument):
            normal(mean, variance)


class TestGaussianKernel:
    """The kernel x -> N(x, variance)."""

    def test_rows_sum_to_one(self):
        """Each point spreads all its mass over the cells."""
        edges = np.array([-np.inf, -2.0, 0.0, 2.0, np.inf])
        rows = gaussian_kernel(1.0).interval_probabilities([-3.0, 0.0, 5.0], edges)
        assert rows.shape == (3, 4)
        assert np.allclose(rows.sum(axis=1), 1.0)

    def test_grid_matches_pointwise(self):
        """The vectorized grid agrees with evaluating each point separately."""
        kernel = gaussian_kernel(0.5)
        edges = np.array([-np.inf, -1.0, 0.5, 3.0, np.inf])
        xs = np.array([-2.0, 0.1, 8.0])
        expected = np.vstack([kernel.at(x).interval_mass(edges[:-1], edges[1:]) for x in xs])
        assert np.allclose(kernel.interval_probabilities(xs, edges), expected, atol=1e-15)

    def test_descriptor(self):
        """Kernels print with their variance."""
        assert str(gaussian_kernel(1.0)) == "gaussian_kernel:1"


class TestExactPosterior:
    """Conjugate normal posterior used as the reference answer."""

    def test_observation_half(self):
        """N(0, 1) prior, unit likelihood, observation 0.5 gives N(0.25, 0.5)."""
        posterior = exact_gaussian_posterior(0.0, 1.0, 1.0, 0.5)
        mean, variance = posterior.descriptor.params
        assert mean == pytest.approx(0.25)
        assert variance == pytest.approx(0.5)

    def test_tail_query(self):
        """P(X > 1) under N(0.25, 0.5)."""
        posterior = exact_gaussian_posterior(0.0, 1.0, 1.0, 0.5)
        expected = stats.norm.sf(0.75 / math.sqrt(0.5))
        assert posterior_tail_query(posterior, 1.0) == pytest.approx(expected, abs=1e-10)
        assert expected == pytest.approx(0.14437, abs=1e-4)

    def test_hand_computed_case(self):
        """N(1, 2) prior, variance 2 likelihood, observation 3 gives N(2, 1)."""
        mean, variance = exact_gaussian_posterior(1.0, 2.0, 2.0, 3.0).descriptor.params
        assert mean == pytest.approx(2.0)
        assert variance == pytest.approx(1.0)

    def test_precisions_add_up(self):
        """Updating twice matches one update with both observations."""
        first = exact_gaussian_posterior(0.5, 3.0, 1.5, 1.0)
        twice = exact_gaussian_posterior(*first.descriptor.params, 1.5, -0.25)
        variance = 1.0 / (1.0 / 3.0 + 2.0 / 1.5)
        mean = variance * (0.5 / 3.0 + (1.0 - 0.25) / 1.5)
        assert twice.descriptor.params == pytest.approx((mean, variance))

    def test_invalid_variance(self):
        """Variances must be positive."""
        with pytest.raises(InvalidArgument):
            exact_gaussian_posterior(0.0, 1.0, 0.0, 0.5)


class TestParseMeasure:
    """Descriptor strings for priors."""

    def test_normal(self):
        """normal:mean:variance."""
        assert parse_measure(" normal:-1:4 ").descriptor.params == (-1.0, 4.0)

    @pytest.mark.parametrize("text", ["normal", "normal:0", "cauchy:0:1", "normal:x:1"])
    def test_rejected(self, text):
        """Anything else is rejected."""
        with pytest.raises(InvalidArgument):
            parse_measure(text)
