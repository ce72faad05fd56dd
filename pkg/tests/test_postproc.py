import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pdduq.adaptive import AdaptiveConfig
from pdduq.evaluation import ModelEvaluationError
from pdduq.orthopoly import build_basis
from pdduq.postproc import (
    EmbeddedMcsResult,
    SweepResult,
    crude_mcs,
    economy_comparison,
    embedded_mcs,
    ks_distance,
    tolerance_sweep,
    truncated_sweep,
)
from pdduq.quadrature import FullGridEngine
from pdduq.random_input import Gaussian, RandomInput, Uniform
from pdduq.store import CoefficientStore, SurrogateModel


def _surrogate(dim=3, y0=0.0, linear=1.0, marginal=None):
    ri = RandomInput.iid(marginal or Gaussian(), dim)
    store = CoefficientStore(dim, y0)
    for i in range(dim):
        if linear:
            store.set((i,), (1,), linear)
    return SurrogateModel(store, [build_basis(m, 3) for m in ri.marginals], ri)


class TestEmbedded:
    def test_constant_surrogate(self):
        res = embedded_mcs(_surrogate(y0=4.5, linear=0.0), 1000, seed=1)
        np.testing.assert_array_equal(res.samples[:, 0], 4.5)
        assert res.variance[0] == 0.0
        np.testing.assert_array_equal(res.quantiles[:, 0], 4.5)

    def test_linear_gaussian_variance(self):
        res = embedded_mcs(_surrogate(dim=6), 200_000, seed=3)
        np.testing.assert_allclose(res.variance, [6.0], rtol=0.01)

    def test_seed_determinism_and_thread_independence(self):
        sur = _surrogate()
        a = embedded_mcs(sur, 5000, seed=11, block=512)
        b = embedded_mcs(sur, 5000, seed=11, block=512, threads=4)
        np.testing.assert_array_equal(a.samples, b.samples)
        c = embedded_mcs(sur, 5000, seed=12, block=512)
        assert not np.array_equal(a.samples, c.samples)

    def test_histogram_mass(self):
        res = embedded_mcs(_surrogate(), 20_000, seed=5)
        edges, masses = res.histograms[0]
        np.testing.assert_allclose(masses.sum(), 1.0, rtol=1e-12)
        assert len(edges) == len(masses) + 1 and np.all(np.diff(edges) > 0)

    def test_cdf_monotone(self):
        x, p = embedded_mcs(_surrogate(), 1000, seed=5).cdf()
        assert np.all(np.diff(x) >= 0) and p[-1] == 1.0

    def test_single_sample(self, tmp_path):
        res = embedded_mcs(_surrogate(), 1, seed=0)
        assert res.variance[0] == 0.0
        res.write_cdf_csv(tmp_path / "cdf.csv")
        rows = list(csv.reader(open(tmp_path / "cdf.csv")))
        assert rows[0] == ["value", "cumulative_probability"] and len(rows) == 2
        assert float(rows[1][1]) == 1.0

    def test_csv_outputs(self, tmp_path):
        res = EmbeddedMcsResult(np.column_stack([np.arange(10.0), -np.arange(10.0)]), 0, "surrogate")
        res.write_cdf_csv(tmp_path / "c.csv", max_rows=3)
        assert len(list(csv.reader(open(tmp_path / "c.csv")))) == 4
        res.write_histogram_csv(tmp_path / "h.csv", 1)
        rows = list(csv.reader(open(tmp_path / "h.csv")))[1:]
        np.testing.assert_allclose(sum(float(r[2]) for r in rows), 1.0)
        res.write_paired_csv(tmp_path / "p.csv")
        rows = list(csv.reader(open(tmp_path / "p.csv")))
        assert rows[0] == ["y1", "y2"] and rows[3] == ["2.0", "-2.0"]
        assert res.summary()["n"] == 10

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            embedded_mcs(_surrogate(), 0, seed=0)
        sur = _surrogate()
        sur.input = None
        with pytest.raises(ValueError):
            embedded_mcs(sur, 10, seed=0)


@settings(max_examples=10)
@given(st.floats(0.5, 3.0), st.integers(0, 2**63))
def test_sample_mean_within_lln_bound(scale, seed):
    # six standard deviations of the sample mean
    L = 4000
    res = embedded_mcs(_surrogate(dim=2, linear=scale), L, seed=seed)
    assert abs(res.mean[0]) <= 6 * scale * np.sqrt(2.0 / L)


class TestCrude:
    def test_counts_and_agreement(self):
        ri = RandomInput.iid(Uniform(), 2)
        model = lambda x: x[:, 0] + x[:, 1] ** 2
        res = crude_mcs(model, ri, 50_000, seed=2)
        assert res.eval_count == 50_000
        np.testing.assert_allclose(res.mean, [0.5 + 1 / 3], rtol=5e-3)
        np.testing.assert_allclose(res.variance, [1 / 12 + 4 / 45], rtol=2e-2)

    def test_error_reports_global_index(self):
        ri = RandomInput.iid(Uniform(), 1)

        calls = []

        def model(x):
            calls.append(len(x))
            y = x[:, 0].copy()
            if len(calls) == 3:
                y[-1] = np.nan
            return y

        with pytest.raises(ModelEvaluationError, match="sample 299"):
            crude_mcs(model, ri, 300, seed=0, block=100)

    def test_embedded_and_crude_agree(self):
        ri = RandomInput.iid(Gaussian(), 2)
        model = lambda x: x[:, 0] + 0.5 * x[:, 0] * x[:, 1]
        eng = FullGridEngine(model, ri, n_points=3)
        from pdduq.adaptive import run_adaptive

        sur = run_adaptive(eng, AdaptiveConfig(eps1=1e-9, eps2=1e-9)).surrogate
        a = embedded_mcs(sur, 40_000, seed=4)
        b = crude_mcs(model, ri, 40_000, seed=4)
        np.testing.assert_allclose(a.samples, b.samples, atol=1e-12)


def test_ks_distance():
    assert ks_distance([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert ks_distance([0.0], [1.0]) == 1.0
    np.testing.assert_allclose(ks_distance([1.0, 2.0, 3.0, 4.0], [3.0, 4.0, 5.0, 6.0]), 0.5)


class TestSweeps:
    def test_empty_sweep(self, tmp_path):
        res = tolerance_sweep(lambda: None, [], reference=1.0)
        assert len(res) == 0 and res.min_count(1.0) is None
        res.to_csv(tmp_path / "s.csv")
        assert len(list(csv.reader(open(tmp_path / "s.csv")))) == 1

    def test_sweeps_and_economy(self, tmp_path):
        ri = RandomInput.iid(Uniform(), 2)
        model = lambda x: np.exp(x[:, 0]) * (1 + x[:, 1] ** 2)
        exact = FullGridEngine(model, ri, n_points=10, max_order=10)
        ref = sum(float(np.sum(exact.coefficients(u, 9) ** 2)) for u in [(0,), (1,), (0, 1)])
        factory = lambda: FullGridEngine(model, ri, n_points=8, max_order=8)
        a = tolerance_sweep(factory, [1e-2, 1e-4, 1e-6], ref, "reference run")
        t = truncated_sweep(factory(), [1, 2], [1, 2, 3, 4], ref, "reference run")
        assert len(a) == 3 and len(t) == 8
        errs = [r.rel_error for r in a.rows]
        assert errs == sorted(errs, reverse=True)
        econ = economy_comparison(a, t, [1e-1, 1e-3, 1e-30])
        assert econ[-1]["adaptive"] is None and not econ[-1]["adaptive_not_larger"]
        assert econ[0]["adaptive"] is not None
        a.to_csv(tmp_path / "a.csv")
        rows = list(csv.DictReader(open(tmp_path / "a.csv")))
        assert rows[0]["reference"] == "reference run" and rows[0]["tolerance"] == "0.01"
        assert a.to_dict()["rows"][0]["method"] == "adaptive"
