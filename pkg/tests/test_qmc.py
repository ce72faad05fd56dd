import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import qmc as scipy_qmc

from pdduq.qmc import SamplingEngine, SobolSequence, estimate_coeffs_qmc, load_direction_numbers
from pdduq.random_input import Gaussian, RandomInput, Uniform


class TestSobol:
    def test_first_point(self):
        np.testing.assert_array_equal(SobolSequence(1).next_point(), [0.5])
        np.testing.assert_array_equal(SobolSequence(4).next_point(), [0.5] * 4)

    def test_known_prefix(self):
        np.testing.assert_array_equal(SobolSequence(1).next_block(4)[:, 0], [0.5, 0.75, 0.25, 0.375])

    @pytest.mark.parametrize("dim", [1, 2, 7, 40, 300])
    def test_matches_independent_generator(self, dim):
        # scipy's unscrambled sequence starts at the origin; ours drops it
        ref = scipy_qmc.Sobol(dim, scramble=False).random_base2(10)[1:]
        np.testing.assert_array_equal(SobolSequence(dim).next_block(1023), ref)

    def test_skip_and_reset(self):
        s = SobolSequence(3, skip=5)
        a = s.next_block(4)
        np.testing.assert_array_equal(a, SobolSequence(3).next_block(9)[5:])
        s.reset()
        np.testing.assert_array_equal(s.next_block(4), a)

    def test_scramble_deterministic_and_open(self):
        a = SobolSequence(6, scramble=True, seed=3).next_block(512)
        b = SobolSequence(6, scramble=True, seed=3).next_block(512)
        np.testing.assert_array_equal(a, b)
        assert np.all((a > 0) & (a < 1))
        assert not np.array_equal(a, SobolSequence(6).next_block(512))

    def test_table_covers_many_dimensions(self):
        assert len(load_direction_numbers()) + 1 >= 1000
        with pytest.raises(ValueError):
            SobolSequence(len(load_direction_numbers()) + 2)


@given(st.integers(1, 12), st.integers(1, 8))
def test_dyadic_balance(dim, k):
    # each 2^k block, origin included, places one point per dyadic interval in every coordinate
    pts = np.vstack([np.zeros((1, dim)), SobolSequence(dim).next_block(2**k - 1)])
    for c in range(dim):
        cells = np.floor(pts[:, c] * 2**k).astype(int)
        assert sorted(cells) == list(range(2**k))


class TestSamplingEngine:
    def test_linear_model_converges(self):
        ri = RandomInput.iid(Uniform(), 2)
        eng = SamplingEngine(lambda x: x[:, 0] + 2 * x[:, 1], ri, L=4096)
        np.testing.assert_allclose(eng.mean(), 1.5, atol=1e-3)
        c = eng.coefficients((1,), 1)
        np.testing.assert_allclose(c, [2 / np.sqrt(12)], rtol=5e-3)
        assert eng.eval_count == 4096

    def test_random_sampler_seeded(self):
        ri = RandomInput.iid(Gaussian(), 2)
        f = lambda x: x[:, 0] * x[:, 1]
        a = SamplingEngine(f, ri, L=256, sampler="random", seed=9).coefficients((0, 1), 2)
        b = SamplingEngine(f, ri, L=256, sampler="random", seed=9).coefficients((0, 1), 2)
        np.testing.assert_array_equal(a, b)

    def test_unknown_sampler(self):
        with pytest.raises(ValueError):
            SamplingEngine(lambda x: x[:, 0], RandomInput.iid(Uniform(), 1), L=4, sampler="halton")

    def test_estimate_helper(self):
        ri = RandomInput.iid(Uniform(), 2)
        store = estimate_coeffs_qmc(lambda x: x[:, 1], ri, [((1,), (1,)), ((0,), (1,))], L=2048)
        np.testing.assert_allclose(store[(1,), (1,)], 1 / np.sqrt(12), rtol=5e-3)
        assert abs(store[(0,), (1,)]) < 1e-3
