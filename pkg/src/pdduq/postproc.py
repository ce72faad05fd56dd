"""Output distributions by Monte Carlo sampling and convergence sweeps.

Embedded sampling evaluates a PDD surrogate (never the original model);
crude sampling evaluates the model itself.  Both draw standardized inputs
from counter-based Philox streams, one substream per block, so results
depend only on the seed and not on the thread count.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .adaptive import AdaptiveConfig, build_truncated, run_adaptive
from .evaluation import ModelEvaluationError, ModelEvaluator
from .store import SurrogateModel, count_adaptive

__all__ = [
    "EmbeddedMcsResult",
    "embedded_mcs",
    "crude_mcs",
    "ks_distance",
    "SweepRow",
    "SweepResult",
    "tolerance_sweep",
    "truncated_sweep",
    "economy_comparison",
    "DEFAULT_QUANTILES",
    "MCS_BLOCK",
]

MCS_BLOCK = 1 << 16
GENERATOR = "numpy.random.Philox"
DEFAULT_QUANTILES = (0.001, 0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99, 0.999)


def _block_streams(seed: int, n: int, block: int):
    """``(start, size, Generator)`` for every block of an ``n``-sample run."""
    starts = list(range(0, n, block))
    children = np.random.SeedSequence(seed).spawn(len(starts))
    return [(s, min(block, n - s), np.random.Generator(np.random.Philox(c))) for s, c in zip(starts, children)]


@dataclass
class EmbeddedMcsResult:
    """Samples of one or more outputs and their summary statistics.

    Attributes
    ----------
    samples : ndarray, shape (L, M)
    seed : int
    mean, variance : ndarray, shape (M,)
        Sample mean and unbiased sample variance (0 when ``L = 1``).
    quantile_levels : tuple of float
    quantiles : ndarray, shape (len(quantile_levels), M)
    histograms : list of (edges, masses)
        Freedman-Diaconis bins per output; masses sum to one.
    """

    samples: np.ndarray
    seed: int
    source: str
    mean: np.ndarray = field(init=False)
    variance: np.ndarray = field(init=False)
    quantile_levels: tuple = DEFAULT_QUANTILES
    quantiles: np.ndarray = field(init=False)
    histograms: list = field(init=False)
    generator: str = GENERATOR
    eval_count: int = 0

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        self.samples = s
        self.mean = s.mean(axis=0)
        self.variance = s.var(axis=0, ddof=1) if len(s) > 1 else np.zeros(s.shape[1])
        self.quantiles = np.quantile(s, self.quantile_levels, axis=0)
        self.histograms = []
        for k in range(s.shape[1]):
            edges = np.histogram_bin_edges(s[:, k], bins="fd")
            counts, edges = np.histogram(s[:, k], bins=edges)
            self.histograms.append((edges, counts / len(s)))

    @property
    def n(self) -> int:
        return len(self.samples)

    @property
    def n_outputs(self) -> int:
        return self.samples.shape[1]

    def cdf(self, output: int = 0):
        """Sorted sample values and their empirical cumulative probabilities."""
        x = np.sort(self.samples[:, output])
        return x, np.arange(1, len(x) + 1) / len(x)

    def summary(self) -> dict:
        return {
            "source": self.source,
            "n": self.n,
            "seed": self.seed,
            "generator": self.generator,
            "eval_count": self.eval_count,
            "mean": self.mean.tolist(),
            "variance": self.variance.tolist(),
            "std": np.sqrt(self.variance).tolist(),
            "quantiles": {repr(q): row.tolist() for q, row in zip(self.quantile_levels, self.quantiles)},
        }

    def write_cdf_csv(self, path, output: int = 0, max_rows: int | None = None):
        """Rows ``value, cumulative_probability``; ``max_rows`` thins evenly."""
        x, p = self.cdf(output)
        if max_rows is not None and len(x) > max_rows:
            idx = np.unique(np.linspace(0, len(x) - 1, max_rows).round().astype(int))
            x, p = x[idx], p[idx]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["value", "cumulative_probability"])
            w.writerows((repr(float(a)), repr(float(b))) for a, b in zip(x, p))

    def write_histogram_csv(self, path, output: int = 0):
        edges, masses = self.histograms[output]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["left_edge", "right_edge", "mass"])
            for a, b, m in zip(edges[:-1], edges[1:], masses):
                w.writerow([repr(float(a)), repr(float(b)), repr(float(m))])

    def write_paired_csv(self, path, first: int = 0, second: int = 1, max_rows: int | None = None):
        """Joint samples of two outputs, for external density estimation."""
        rows = self.samples[:, [first, second]]
        if max_rows is not None:
            rows = rows[:max_rows]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"y{first + 1}", f"y{second + 1}"])
            w.writerows((repr(float(a)), repr(float(b))) for a, b in rows)


def embedded_mcs(surrogate: SurrogateModel | list, L: int, seed: int, threads: int = 1,
                 block: int = MCS_BLOCK, quantile_levels=DEFAULT_QUANTILES) -> EmbeddedMcsResult:
    """Sample one surrogate, or a list of surrogates sharing one input, ``L`` times."""
    if L < 1:
        raise ValueError("sample size L must be positive")
    surrogates = surrogate if isinstance(surrogate, (list, tuple)) else [surrogate]
    ri = surrogates[0].input
    if ri is None:
        raise ValueError("surrogate has no attached random input")
    out = np.empty((L, len(surrogates)))

    def work(item):
        start, size, rng = item
        z = ri.sample_standard(size, rng)
        for k, s in enumerate(surrogates):
            out[start : start + size, k] = s.evaluate(z)

    streams = _block_streams(seed, L, block)
    if threads > 1 and len(streams) > 1:
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(work, streams))
    else:
        for item in streams:
            work(item)
    return EmbeddedMcsResult(out, seed, "surrogate", quantile_levels=tuple(quantile_levels))


def crude_mcs(model, random_input, L: int, seed: int, threads: int = 1, budget=None,
              evaluator: ModelEvaluator | None = None, block: int = MCS_BLOCK,
              quantile_levels=DEFAULT_QUANTILES) -> EmbeddedMcsResult:
    """Sample the original model ``L`` times; every sample is one model evaluation."""
    if L < 1:
        raise ValueError("sample size L must be positive")
    ev = evaluator or ModelEvaluator(model, random_input, budget=budget, threads=threads, use_cache=False)
    parts = []
    for start, size, rng in _block_streams(seed, L, block):
        z = random_input.sample_standard(size, rng)
        try:
            parts.append(ev.evaluate_standard(z))
        except ModelEvaluationError as exc:
            index = None if exc.index is None else start + exc.index
            raise ModelEvaluationError(f"crude sampling failed at sample {index}: {exc}", index) from exc
    return EmbeddedMcsResult(np.concatenate(parts, axis=0), seed, "model", quantile_levels=tuple(quantile_levels),
                             eval_count=ev.eval_count)


def ks_distance(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov statistic ``sup |F_a - F_b|``."""
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / len(a)
    fb = np.searchsorted(b, grid, side="right") / len(b)
    return float(np.max(np.abs(fa - fb)))


@dataclass
class SweepRow:
    method: str
    setting: dict
    variance: float
    rel_error: float
    coefficient_count: int
    eval_count: int


@dataclass
class SweepResult:
    """Relative variance errors and costs of a family of runs."""

    reference: float
    reference_label: str
    rows: list = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def add(self, method, setting, variance, count, evals):
        err = abs(variance - self.reference) / abs(self.reference)
        self.rows.append(SweepRow(method, dict(setting), float(variance), err, int(count), int(evals)))

    def min_count(self, target: float):
        """Fewest coefficients among rows with ``rel_error <= target`` (``None`` if none)."""
        counts = [r.coefficient_count for r in self.rows if r.rel_error <= target]
        return min(counts) if counts else None

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["method", "tolerance", "S", "m", "rel_error", "coeff_count", "eval_count", "variance", "reference"])
            for r in self.rows:
                s = r.setting
                w.writerow([
                    r.method,
                    "" if s.get("tolerance") is None else repr(s["tolerance"]),
                    "" if s.get("S") is None else s["S"],
                    "" if s.get("m") is None else s["m"],
                    repr(r.rel_error),
                    r.coefficient_count,
                    r.eval_count,
                    repr(r.variance),
                    self.reference_label,
                ])

    def to_dict(self) -> dict:
        return {
            "reference": self.reference,
            "reference_label": self.reference_label,
            "rows": [vars(r) for r in self.rows],
        }


def _engine(factory_or_engine):
    if hasattr(factory_or_engine, "coefficients"):
        return factory_or_engine
    return factory_or_engine()


def tolerance_sweep(engine, tolerances, reference: float, reference_label: str = "closed form",
                    config: AdaptiveConfig | None = None, output: int = 0) -> SweepResult:
    """One adaptive run per tolerance with ``eps1 = eps2 = tolerance``.

    ``engine`` is either a coefficient engine, reused across runs, or a
    zero-argument factory called once per run.
    """
    base = config or AdaptiveConfig()
    result = SweepResult(float(reference), reference_label)
    for tol in tolerances:
        cfg = AdaptiveConfig(**{**vars(base), "eps1": float(tol), "eps2": float(tol)})
        eng = _engine(engine)
        run = run_adaptive(eng, cfg, output)
        result.add("adaptive", {"tolerance": float(tol), "S": cfg.S}, run.report["variance"],
                   count_adaptive(run.state.store), eng.eval_count)
    return result


def truncated_sweep(engine, S_values, m_values, reference: float, reference_label: str = "closed form",
                    output: int = 0) -> SweepResult:
    """Truncated PDD for every combination of ``S`` and ``m``."""
    result = SweepResult(float(reference), reference_label)
    for S in S_values:
        for m in m_values:
            eng = _engine(engine)
            sur = build_truncated(eng, S, m, output)
            result.add("truncated", {"S": S, "m": m}, sur.variance(), count_adaptive(sur.store), eng.eval_count)
    return result


def economy_comparison(adaptive: SweepResult, truncated: SweepResult, targets) -> list[dict]:
    """Fewest coefficients each method needs to reach every target error."""
    rows = []
    for t in targets:
        a, b = adaptive.min_count(t), truncated.min_count(t)
        rows.append({
            "target": float(t),
            "adaptive": a,
            "truncated": b,
            "adaptive_not_larger": a is not None and b is not None and a <= b,
        })
    return rows

