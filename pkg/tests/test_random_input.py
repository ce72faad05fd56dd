import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pdduq.random_input import (
    Custom,
    Gaussian,
    Lognormal,
    RandomInput,
    StandardizationError,
    Uniform,
    marginal_from_dict,
)


class TestMarginals:
    def test_uniform_unit_standardization(self):
        m = Uniform(2.0, 6.0)
        assert m.standard == "uniform01"
        np.testing.assert_allclose(m.to_standard([2.0, 4.0, 6.0]), [0.0, 0.5, 1.0])
        np.testing.assert_allclose(m.from_standard([0.25]), [3.0])

    def test_uniform_symmetric_standardization(self):
        m = Uniform(2.0, 6.0, "symmetric")
        assert m.standard == "uniform11"
        np.testing.assert_allclose(m.to_standard([2.0, 4.0, 6.0]), [-1.0, 0.0, 1.0])

    def test_gaussian_moments(self):
        m = Gaussian(1.5, 0.5)
        assert m.mean == 1.5
        assert m.variance == 0.25
        np.testing.assert_allclose(m.cdf(1.5), 0.5)

    def test_lognormal_from_mean_cov(self):
        m = Lognormal.from_mean_cov(1.0, 0.3)
        np.testing.assert_allclose(m.mean, 1.0, rtol=1e-14)
        np.testing.assert_allclose(math.sqrt(m.variance) / m.mean, 0.3, rtol=1e-14)
        # median exp(mu_g) maps to the standard normal origin
        np.testing.assert_allclose(m.to_standard(math.exp(m.mu_g)), 0.0, atol=1e-15)

    def test_lognormal_rejects_bad_sigma(self):
        with pytest.raises(ValueError):
            Lognormal(0.0, 0.0)

    def test_custom_cdf_matches_closed_form(self):
        m = Custom(lambda x: 2.0 * x, 0.0, 1.0)
        x = np.linspace(0.0, 1.0, 11)
        np.testing.assert_allclose(m.cdf(x), x**2, atol=1e-6)
        np.testing.assert_allclose(m.mean, 2.0 / 3.0, rtol=1e-8)
        np.testing.assert_allclose(m.inverse_cdf(np.array([0.25])), [0.5], atol=1e-6)

    def test_custom_semi_infinite(self):
        m = Custom(lambda x: math.exp(-x), 0.0, math.inf)
        np.testing.assert_allclose(m.cdf(np.array([1.0])), [1 - math.exp(-1.0)], atol=1e-6)

    def test_custom_rejects_negative_density(self):
        with pytest.raises(ValueError):
            Custom(lambda x: x - 0.5, 0.0, 1.0)

    def test_dict_round_trip(self):
        for m in (Uniform(-1.0, 3.0), Gaussian(2.0, 3.0), Lognormal(0.1, 0.2)):
            assert marginal_from_dict(m.to_dict()) == m

    def test_custom_not_serializable(self):
        with pytest.raises(TypeError):
            Custom(lambda x: 1.0, 0.0, 1.0).to_dict()


class TestRandomInput:
    def test_rejects_correlation(self):
        with pytest.raises(ValueError, match="independent"):
            RandomInput([Gaussian(), Gaussian()], correlation=[[1.0, 0.5], [0.5, 1.0]])

    def test_accepts_identity_correlation(self):
        assert RandomInput([Gaussian(), Gaussian()], correlation=np.eye(2)).dim == 2

    def test_standard_mean(self):
        ri = RandomInput([Uniform(), Uniform(0, 1, "symmetric"), Gaussian(3.0, 2.0)])
        np.testing.assert_allclose(ri.standard_mean(), [0.5, 0.0, 0.0])

    def test_require_standard(self):
        ri = RandomInput([Gaussian(), Uniform()])
        with pytest.raises(StandardizationError, match=r"\[2\]"):
            ri.require_standard("normal")
        RandomInput([Gaussian(), Lognormal()]).require_standard("normal")

    def test_sampling_is_deterministic(self):
        ri = RandomInput.iid(Lognormal(0.0, 0.3), 4)
        a = ri.sample(100, np.random.Generator(np.random.Philox(7)))
        b = ri.sample(100, np.random.Generator(np.random.Philox(7)))
        np.testing.assert_array_equal(a, b)

    def test_list_round_trip(self):
        ri = RandomInput([Uniform(0, 2), Gaussian(1, 2), Lognormal(0, 0.5)])
        back = RandomInput.from_list(ri.to_list())
        assert back.marginals == ri.marginals


@given(st.floats(-5.0, 5.0), st.floats(0.1, 3.0), st.floats(1e-6, 1 - 1e-6))
def test_gaussian_standardization_round_trip(mu, sigma, u):
    m = Gaussian(mu, sigma)
    x = m.inverse_cdf(u)
    np.testing.assert_allclose(m.cdf(x), u, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(m.from_standard(m.to_standard(x)), x, rtol=1e-12, atol=1e-12)


@given(st.floats(-2.0, 2.0), st.floats(0.05, 1.0), st.floats(1e-6, 1 - 1e-6))
def test_lognormal_standard_inverse_cdf_consistent(mu_g, sigma_g, u):
    m = Lognormal(mu_g, sigma_g)
    np.testing.assert_allclose(m.from_standard(m.standard_inverse_cdf(u)), m.inverse_cdf(u), rtol=1e-12)


@given(st.floats(-10.0, 10.0), st.floats(0.1, 10.0), st.floats(1e-9, 1 - 1e-9))
def test_uniform_maps_into_support(a, width, u):
    m = Uniform(a, a + width)
    x = m.inverse_cdf(u)
    assert a - 1e-12 <= x <= a + width + 1e-12


@pytest.mark.parametrize("u", [0.0, 1.0, -0.1, np.nan])
def test_inverse_cdf_rejects_closed_endpoints(u):
    with pytest.raises(ValueError):
        Gaussian().inverse_cdf(u)
