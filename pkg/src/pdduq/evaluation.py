"""Counted, cached evaluation of the original model.

Models are vectorized callables taking physical points of shape ``(n, N)``
and returning ``(n,)`` or ``(n, M)`` values.  :class:`ModelEvaluator` maps
standardized points to physical space, looks each point up in an
:class:`EvalCache`, evaluates only the missing points (optionally in parallel
blocks), checks the results are finite, and enforces an evaluation budget.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor

import numpy as np

__all__ = [
    "EvalCache",
    "ModelEvaluator",
    "ModelEvaluationError",
    "BudgetExceeded",
    "round_key",
]

# mantissa bits kept in cache keys (about 12 significant decimal digits)
_KEY_BITS = 40
_DROP = 52 - _KEY_BITS


class ModelEvaluationError(RuntimeError):
    """The model failed or returned unusable values."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class BudgetExceeded(RuntimeError):
    """The run would exceed its model-evaluation budget."""


def round_key(x: np.ndarray) -> np.ndarray:
    """Round ``float64`` values to ``_KEY_BITS`` mantissa bits (ties away from zero)."""
    x = np.ascontiguousarray(np.asarray(x, dtype=np.float64) + 0.0)  # folds -0.0 into 0.0
    bits = x.view(np.int64)
    half = np.int64(1 << (_DROP - 1))
    mask = np.int64(~((1 << _DROP) - 1))
    return ((bits + half) & mask).view(np.float64)


class EvalCache:
    """Model values keyed by rounded physical coordinates.

    Safe for concurrent insert-if-absent; the first stored value wins.
    """

    def __init__(self):
        self._data: dict[bytes, np.ndarray] = {}
        self._lock = threading.Lock()

    def __len__(self):
        return len(self._data)

    @staticmethod
    def keys_for(x: np.ndarray) -> list[bytes]:
        r = np.ascontiguousarray(round_key(np.atleast_2d(x)))
        return [row.tobytes() for row in r]

    def get(self, key: bytes):
        return self._data.get(key)

    def insert(self, key: bytes, value: np.ndarray):
        with self._lock:
            self._data.setdefault(key, value)


class ModelEvaluator:
    """Wrap a vectorized model with caching, counting and a budget.

    Parameters
    ----------
    model : callable
        ``model(X) -> Y`` with ``X`` physical, shape ``(n, N)``.
    random_input : RandomInput
        Used to map standardized points back to physical space.
    budget : int, optional
        Maximum number of distinct model evaluations.
    threads : int
        Number of worker threads evaluating blocks concurrently.
    block : int
        Points per model call.
    cache : EvalCache, optional
        Share a cache between evaluators.
    """

    def __init__(self, model, random_input, budget=None, threads: int = 1, block: int = 1 << 16, cache=None, use_cache=True):
        self.model = model
        self.input = random_input
        self.budget = budget
        self.threads = max(1, int(threads))
        self.block = int(block)
        self.cache = cache if cache is not None else EvalCache()
        self.use_cache = use_cache
        self.n_outputs = None
        self._count = 0
        self._lock = threading.Lock()

    @property
    def eval_count(self) -> int:
        return self._count

    def _reserve(self, n: int):
        with self._lock:
            if self.budget is not None and self._count + n > self.budget:
                raise BudgetExceeded(
                    f"evaluation budget of {self.budget} exceeded ({self._count} used, {n} more requested)"
                )
            self._count += n

    def _call(self, x: np.ndarray, offset: int) -> np.ndarray:
        try:
            y = np.asarray(self.model(x), dtype=float)
        except (ModelEvaluationError, BudgetExceeded):
            raise
        except Exception as exc:
            raise ModelEvaluationError(f"model failed on points {offset}..{offset + len(x) - 1}: {exc}", offset) from exc
        if y.ndim == 1:
            y = y[:, None]
        if y.shape[0] != len(x):
            raise ModelEvaluationError(f"model returned {y.shape[0]} rows for {len(x)} points", offset)
        bad = ~np.all(np.isfinite(y), axis=1)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise ModelEvaluationError(f"model returned a non-finite value at point {offset + i}: {x[i].tolist()}", offset + i)
        return y

    def _evaluate_physical(self, x: np.ndarray) -> np.ndarray:
        starts = list(range(0, len(x), self.block))
        if self.threads == 1 or len(starts) == 1:
            parts = [self._call(x[s : s + self.block], s) for s in starts]
        else:
            with ThreadPoolExecutor(self.threads) as pool:
                parts = list(pool.map(lambda s: self._call(x[s : s + self.block], s), starts))
        return np.concatenate(parts, axis=0) if parts else np.empty((0, self.n_outputs or 1))

    def evaluate_physical(self, x) -> np.ndarray:
        """Model values ``(n, M)`` at physical points, reusing cached values."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if not self.use_cache:
            self._reserve(len(x))
            y = self._evaluate_physical(x)
            self._check_outputs(y)
            return y
        keys = EvalCache.keys_for(x)
        values = [self.cache.get(k) for k in keys]
        missing_keys: dict[bytes, int] = {}
        for idx, (k, v) in enumerate(zip(keys, values)):
            if v is None and k not in missing_keys:
                missing_keys[k] = idx
        if missing_keys:
            rows = np.fromiter(missing_keys.values(), dtype=np.int64, count=len(missing_keys))
            self._reserve(len(rows))
            y_new = self._evaluate_physical(x[rows])
            self._check_outputs(y_new)
            for k, row in zip(missing_keys, y_new):
                self.cache.insert(k, row)
            values = [self.cache.get(k) for k in keys]
        out = np.stack(values) if values else np.empty((0, self.n_outputs or 1))
        return out

    def _check_outputs(self, y):
        if self.n_outputs is None:
            self.n_outputs = y.shape[1]
        elif y.shape[1] != self.n_outputs:
            raise ModelEvaluationError(f"model output arity changed from {self.n_outputs} to {y.shape[1]}")

    def evaluate_standard(self, z) -> np.ndarray:
        """Model values ``(n, M)`` at standardized points."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        return self.evaluate_physical(self.input.from_standard(z))
