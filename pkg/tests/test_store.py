import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pdduq.orthopoly import build_basis
from pdduq.random_input import Gaussian, RandomInput, Uniform
from pdduq.store import (
    CoefficientStore,
    SurrogateModel,
    UndefinedSensitivityError,
    canonical_key,
    count_adaptive,
    count_truncated,
)


@st.composite
def stores(draw, max_dim=4):
    dim = draw(st.integers(1, max_dim))
    store = CoefficientStore(dim, draw(st.floats(-5, 5)))
    for s in range(1, dim + 1):
        for u in itertools.combinations(range(dim), s):
            if not draw(st.booleans()):
                continue
            m = draw(st.integers(1, 3))
            for j in itertools.product(range(1, m + 1), repeat=s):
                store.set(u, j, draw(st.floats(-2, 2)))
    return store


def _direct(store, bases, z):
    """Reference evaluation summing one basis product per entry."""
    out = np.full(len(z), store.y_empty)
    for (u, j), c in store.items():
        term = np.full(len(z), c)
        for i, k in zip(u, j):
            term = term * bases[i].eval(k, z[:, i])
        out += term
    return out


class TestKeys:
    def test_canonical_sorting(self):
        assert canonical_key((2, 0), (3, 1)) == ((0, 2), (1, 3))

    @pytest.mark.parametrize("u,j", [((0, 0), (1, 1)), ((0,), (0,)), ((0, 1), (1,)), ((), ()), ((-1,), (1,))])
    def test_invalid_keys(self, u, j):
        with pytest.raises(ValueError):
            canonical_key(u, j)

    def test_duplicates_and_dimension(self):
        s = CoefficientStore(2)
        s.set((0,), (1,), 1.0)
        with pytest.raises(KeyError):
            s.set((0,), (1,), 2.0)
        s.set((0,), (1,), 2.0, replace=True)
        assert s[(0,), (1,)] == 2.0
        with pytest.raises(ValueError):
            s.set((2,), (1,), 1.0)


class TestStatistics:
    def test_variance_and_indices(self):
        s = CoefficientStore(3, 1.5)
        s.set((0,), (1,), 3.0)
        s.set((0,), (2,), 1.0)
        s.set((1, 2), (1, 1), 2.0)
        assert s.mean() == 1.5
        assert s.variance() == 14.0
        assert s.component_variance((0,)) == 10.0
        assert s.component_variance((0,), order=1) == 9.0
        np.testing.assert_allclose(list(s.sensitivity_indices().values()), [10 / 14, 4 / 14])
        assert s.subsets() == [(0,), (1, 2)]
        assert s.subset_order((0,)) == 2 and s.max_order() == 2 and s.max_cardinality() == 2

    def test_zero_variance_indices_undefined(self):
        with pytest.raises(UndefinedSensitivityError):
            CoefficientStore(2, 1.0).sensitivity_indices()

    def test_set_subset_order_filter(self):
        s = CoefficientStore(2)
        s.set_subset((0, 1), np.arange(9.0).reshape(3, 3), max_order=2)
        assert len(s) == 4
        assert s[(0, 1), (2, 2)] == 4.0

    def test_counts(self):
        assert count_truncated(5, 2, 5) == 1 + 5 * 5 + 10 * 25
        assert count_truncated(5, 5, 5) == 6**5
        assert count_truncated(9, 3, 4) == 5989
        s = CoefficientStore(2)
        s.set((0,), (1,), 1.0)
        assert count_adaptive(s) == 2 == s.count()


@settings(max_examples=30)
@given(stores())
def test_json_round_trip_bit_exact(store):
    back = CoefficientStore.loads(store.dumps())
    assert back.dim == store.dim and back.y_empty == store.y_empty
    assert dict(back.items()) == dict(store.items())


@settings(max_examples=30)
@given(stores())
def test_variance_is_sum_of_component_variances(store):
    np.testing.assert_allclose(sum(store.component_variances().values()), store.variance(), rtol=1e-12, atol=1e-15)


@settings(max_examples=25)
@given(stores(), st.integers(0, 2**32 - 1))
def test_surrogate_matches_direct_sum(store, seed):
    ri = RandomInput([Uniform(), Gaussian(), Uniform(-1, 1, "symmetric"), Gaussian()][: store.dim])
    bases = [build_basis(m, 4) for m in ri.marginals]
    z = ri.sample_standard(37, np.random.Generator(np.random.Philox(seed)))
    sur = SurrogateModel(store, bases, ri)
    scale = 1 + sum(abs(c) for _, c in store.items())
    np.testing.assert_allclose(sur.evaluate(z, block=8), _direct(store, bases, z), atol=1e-12 * scale * 50)


def test_surrogate_single_point_and_physical():
    ri = RandomInput([Gaussian(10.0, 2.0)])
    s = CoefficientStore(1, 10.0)
    s.set((0,), (1,), 2.0)
    sur = SurrogateModel(s, [build_basis(ri.marginals[0], 2)], ri)
    assert sur.evaluate(np.array([1.0])) == pytest.approx(12.0)
    np.testing.assert_allclose(sur.evaluate_physical(np.array([[14.0]])), [14.0])
    with pytest.raises(ValueError):
        sur.evaluate(np.zeros((2, 2)))


def test_surrogate_moments_by_sampling():
    ri = RandomInput.iid(Uniform(), 2)
    s = CoefficientStore(2, 0.5)
    s.set((0,), (2,), 0.3)
    s.set((0, 1), (1, 3), -0.4)
    sur = SurrogateModel(s, [build_basis(m, 4) for m in ri.marginals], ri)
    y = sur.evaluate(ri.sample_standard(400_000, np.random.Generator(np.random.Philox(2))))
    np.testing.assert_allclose(y.mean(), 0.5, atol=5e-3)
    np.testing.assert_allclose(y.var(), 0.25, rtol=1e-2)
    assert sur.variance() == pytest.approx(0.25)
