import threading

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pdduq.evaluation import BudgetExceeded, EvalCache, ModelEvaluationError, ModelEvaluator, round_key
from pdduq.random_input import Gaussian, RandomInput, Uniform


class Counting:
    def __init__(self, f):
        self.f = f
        self.calls = 0
        self.lock = threading.Lock()

    def __call__(self, x):
        with self.lock:
            self.calls += len(x)
        return self.f(x)


def test_cache_reuses_points():
    model = Counting(lambda x: x.sum(axis=1))
    ev = ModelEvaluator(model, RandomInput.iid(Uniform(), 2))
    x = np.array([[0.1, 0.2], [0.3, 0.4], [0.1, 0.2]])
    np.testing.assert_allclose(ev.evaluate_physical(x)[:, 0], [0.3, 0.7, 0.3])
    ev.evaluate_physical(x[:1])
    assert model.calls == 2 and ev.eval_count == 2


def test_cache_merges_roundoff_neighbours():
    keys = EvalCache.keys_for(np.array([[0.1], [0.1 + 1e-16], [-0.0], [0.0]]))
    assert keys[0] == keys[1] and keys[2] == keys[3]


def test_no_cache_counts_every_point():
    ev = ModelEvaluator(lambda x: x[:, 0], RandomInput.iid(Uniform(), 1), use_cache=False)
    ev.evaluate_physical(np.zeros((5, 1)))
    assert ev.eval_count == 5


def test_budget():
    ev = ModelEvaluator(lambda x: x[:, 0], RandomInput.iid(Uniform(), 1), budget=3)
    ev.evaluate_physical(np.array([[0.1], [0.2]]))
    with pytest.raises(BudgetExceeded):
        ev.evaluate_physical(np.array([[0.3], [0.4]]))


def test_non_finite_reported_with_index():
    ev = ModelEvaluator(lambda x: np.where(x[:, 0] > 0, 1.0, np.nan), RandomInput.iid(Uniform(), 1))
    with pytest.raises(ModelEvaluationError) as info:
        ev.evaluate_physical(np.array([[0.5], [0.0]]))
    assert info.value.index == 1


def test_model_exception_wrapped():
    def bad(x):
        raise RuntimeError("solver diverged")

    with pytest.raises(ModelEvaluationError, match="solver diverged"):
        ModelEvaluator(bad, RandomInput.iid(Uniform(), 1)).evaluate_physical([[0.2]])


def test_row_count_checked():
    ev = ModelEvaluator(lambda x: x[:1, 0], RandomInput.iid(Uniform(), 1))
    with pytest.raises(ModelEvaluationError, match="rows"):
        ev.evaluate_physical(np.array([[0.1], [0.2]]))


def test_threads_give_identical_results():
    ri = RandomInput.iid(Gaussian(), 3)
    z = np.random.Generator(np.random.Philox(1)).standard_normal((1000, 3))
    f = lambda x: np.column_stack([np.sin(x).sum(axis=1), x.prod(axis=1)])
    a = ModelEvaluator(f, ri, threads=1, block=64).evaluate_standard(z)
    b = ModelEvaluator(f, ri, threads=4, block=64).evaluate_standard(z)
    np.testing.assert_array_equal(a, b)
    assert a.shape == (1000, 2)


def test_standard_points_mapped_to_physical():
    ri = RandomInput([Gaussian(10.0, 2.0)])
    ev = ModelEvaluator(lambda x: x[:, 0], ri)
    np.testing.assert_allclose(ev.evaluate_standard([[1.5]]), [[13.0]])


@given(st.floats(-1e6, 1e6, allow_nan=False).filter(lambda v: v == 0.0 or abs(v) > 1e-300))
def test_round_key_idempotent_and_close(x):
    r = round_key(np.array([x]))
    np.testing.assert_array_equal(round_key(r), r)
    np.testing.assert_allclose(r, [x], rtol=2.0**-40, atol=0)
