import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pdduq.quadrature import (
    DimRedPlan,
    FsiEngine,
    FullGridEngine,
    OrderTooHighError,
    dimred_weights,
    estimate_coeffs_fsi,
    estimate_coeffs_fullgrid,
    fullgrid_point_bound,
)
from pdduq.random_input import Gaussian, RandomInput, StandardizationError, Uniform


def test_dimred_weights_known_values():
    assert dimred_weights(5, 2) == [(0, 1), (1, -3), (2, 6)]
    assert dimred_weights(3, 3) == [(0, 1), (1, 0), (2, 0), (3, 0)]


@given(st.integers(1, 8), st.data())
def test_dimred_weights_reproduce_constant(N, data):
    # the rule integrates a constant exactly: sum of coefficient times subset count is one
    R = data.draw(st.integers(0, N))
    total = sum(c * math.comb(N, R - i) for i, c in dimred_weights(N, R))
    assert total == 1


def test_plan_orders_terms():
    plan = DimRedPlan(4, 2, np.zeros(4))
    sizes = [len(v) for v, _ in plan.terms]
    assert sizes == sorted(sizes, reverse=True)
    assert plan.terms_containing((0, 1)) == [((0, 1), 1)]


class TestFullGrid:
    def test_tensor_polynomial_exact(self):
        ri = RandomInput.iid(Uniform(), 3)
        model = lambda x: x[:, 0] ** 2 * x[:, 1] + 3.0 * x[:, 2] ** 3
        eng = FullGridEngine(model, ri, n_points=3, max_order=4)
        np.testing.assert_allclose(eng.mean(), 1 / 6 + 0.75, rtol=1e-14)
        # C_{(1,2),(2,1)} = E[x^2 psi_2] E[x psi_1] with psi_2 = sqrt5 (6x^2-6x+1), psi_1 = sqrt3 (2x-1)
        c = eng.coefficients((0, 1), 2)
        np.testing.assert_allclose(c[1, 0], (math.sqrt(5) / 30) * (math.sqrt(3) / 6), rtol=1e-12)
        np.testing.assert_allclose(c[0, 1], 0.0, atol=1e-15)

    def test_reduction_exact_for_bivariate_sum(self):
        ri = RandomInput.iid(Gaussian(), 4)
        model = lambda x: x[:, 0] * x[:, 1] + x[:, 2] ** 2 * x[:, 3] + np.sin(x[:, 1])
        full = FullGridEngine(model, ri, n_points=8)
        red = FullGridEngine(model, ri, R=2, n_points=8)
        np.testing.assert_allclose(red.mean(), full.mean(), atol=1e-14)
        np.testing.assert_allclose(red.coefficients((2, 3), 3), full.coefficients((2, 3), 3), atol=1e-13)
        assert red.eval_count < full.eval_count

    def test_reduction_zero_drops_dependence(self):
        ri = RandomInput.iid(Uniform(), 2)
        eng = FullGridEngine(lambda x: x[:, 0] * x[:, 1], ri, R=1, n_points=3)
        # univariate cut through the mean point: y = x1/2 + x2/2 - 1/4
        np.testing.assert_allclose(eng.mean(), 0.25, rtol=1e-14)
        np.testing.assert_allclose(eng.coefficients((0, 1), 1), [[0.0]], atol=1e-15)

    def test_order_limit(self):
        eng = FullGridEngine(lambda x: x[:, 0], RandomInput.iid(Uniform(), 2), n_points=3)
        with pytest.raises(OrderTooHighError):
            eng.coefficients((0,), 4)

    def test_shared_points_are_not_reevaluated(self):
        ri = RandomInput.iid(Gaussian(), 5)
        eng = FullGridEngine(lambda x: x.sum(axis=1), ri, R=2, n_points=3)
        eng.coefficients((0, 1), 2)
        eng.coefficients((0,), 2)
        assert eng.eval_count <= eng.point_bound()
        assert fullgrid_point_bound(5, 2, 3) == eng.point_bound()

    def test_cached_coefficients_are_copies(self):
        eng = FullGridEngine(lambda x: x[:, 0] ** 2, RandomInput.iid(Uniform(), 1), n_points=4)
        a = eng.coefficients((0,), 3)
        a[:] = 99.0
        assert eng.coefficients((0,), 2)[0] != 99.0

    def test_estimate_store(self):
        ri = RandomInput.iid(Uniform(), 2)
        store = estimate_coeffs_fullgrid(lambda x: x[:, 0] + x[:, 1], ri, [((0,), (1,)), ((1,), (1,)), ((0, 1), (1, 1))])
        np.testing.assert_allclose(store.mean(), 1.0)
        np.testing.assert_allclose(store.variance(), 2.0 / 12.0, rtol=1e-13)

    def test_dump_grid(self, tmp_path):
        eng = FullGridEngine(lambda x: x[:, 0], RandomInput.iid(Uniform(), 3), R=1, n_points=2)
        eng.dump_grid(tmp_path / "g.csv")
        with open(tmp_path / "g.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0][:2] == ["subset", "layer_coefficient"]
        assert len(rows) == 1 + 3 * 2 + 1


class TestFsiEngine:
    def test_requires_gaussian(self):
        with pytest.raises(StandardizationError):
            FsiEngine(lambda x: x[:, 0], RandomInput.iid(Uniform(), 2))

    def test_matches_full_grid_for_polynomial(self):
        ri = RandomInput.iid(Gaussian(), 3)
        model = lambda x: x[:, 0] ** 2 * x[:, 1] + x[:, 1] * x[:, 2] + x[:, 2] ** 3
        # integrands model * psi_a * psi_b reach total degree 9, exact from level 4
        fsi = FsiEngine(model, ri, level=4)
        full = FullGridEngine(model, ri, n_points=5)
        np.testing.assert_allclose(fsi.mean(), full.mean(), atol=1e-12)
        for u in [(0,), (2,), (0, 1), (1, 2)]:
            np.testing.assert_allclose(fsi.coefficients(u, 3), full.coefficients(u, 3), atol=1e-11)
        assert fsi.eval_count < full.eval_count

    def test_order_limit(self):
        eng = FsiEngine(lambda x: x[:, 0], RandomInput.iid(Gaussian(), 2), level=2)
        with pytest.raises(OrderTooHighError):
            eng.coefficients((0,), 6)

    def test_estimate_helper(self):
        ri = RandomInput.iid(Gaussian(2.0, 3.0), 2)
        store = estimate_coeffs_fsi(lambda x: x[:, 0] - x[:, 1], ri, [((0,), (1,)), ((1,), (1,))], level=2)
        np.testing.assert_allclose(store.mean(), 0.0, atol=1e-13)
        np.testing.assert_allclose(store.variance(), 18.0, rtol=1e-12)


@settings(max_examples=20)
@given(st.integers(1, 6), st.integers(0, 3))
def test_gauss_engine_integrates_monomials(n, k):
    # n-point tensor rule is exact for x^k psi_j when k + j <= 2n - 1
    eng = FullGridEngine(lambda x: x[:, 0] ** k, RandomInput.iid(Gaussian(), 1), n_points=n, max_order=8)
    ref = FullGridEngine(lambda x: x[:, 0] ** k, RandomInput.iid(Gaussian(), 1), n_points=9, max_order=8)
    m = min(n, 2 * n - 1 - k)
    if m >= 1:
        np.testing.assert_allclose(eng.coefficients((0,), m), ref.coefficients((0,), m), atol=1e-11)
