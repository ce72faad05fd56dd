"""Sparse storage of PDD expansion coefficients and the surrogate built from them.

Subsets ``u`` are stored as sorted tuples of 0-based variable indices and
multi-indices ``j`` as tuples of positive orders aligned with ``u``.  The JSON
file format uses 1-based variable indices::

    {"format": "pdduq-store", "version": 1, "dim": 5, "y_empty": 1.0,
     "eval_count": 132, "entries": [{"u": [1], "j": [1], "c": 0.43}, ...]}

Floats are written with Python's shortest round-trip representation, so
reading a file back reproduces every coefficient bit for bit.
"""

from __future__ import annotations

import json
import math
import threading
from collections import defaultdict
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "canonical_key",
    "CoefficientStore",
    "SurrogateModel",
    "count_truncated",
    "count_adaptive",
    "UndefinedSensitivityError",
]


class UndefinedSensitivityError(ZeroDivisionError):
    """Raised when a sensitivity index is requested on a zero-variance expansion."""


def canonical_key(u: Sequence[int], j: Sequence[int]) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Sort ``u`` (carrying ``j`` along) and validate the pair."""
    u = tuple(int(i) for i in u)
    j = tuple(int(k) for k in j)
    if len(u) != len(j):
        raise ValueError(f"subset {u} and multi-index {j} differ in length")
    if len(set(u)) != len(u):
        raise ValueError(f"subset {u} has repeated variables")
    if any(i < 0 for i in u):
        raise ValueError(f"subset {u} has negative variable indices")
    if any(k < 1 for k in j):
        raise ValueError(f"multi-index {j} has a zero or negative order")
    if not u:
        raise ValueError("the empty subset is stored as y_empty, not as an entry")
    order = sorted(range(len(u)), key=u.__getitem__)
    return tuple(u[i] for i in order), tuple(j[i] for i in order)


class CoefficientStore:
    """Map ``(u, j) -> C_{u,j}`` plus the constant term ``y_empty``."""

    def __init__(self, dim: int, y_empty: float = 0.0):
        if dim < 1:
            raise ValueError("dimension must be positive")
        self.dim = int(dim)
        self.y_empty = float(y_empty)
        self._entries: dict[tuple, float] = {}
        self._eval_count = 0
        self._lock = threading.Lock()

    # evaluation accounting -------------------------------------------------
    @property
    def eval_count(self) -> int:
        return self._eval_count

    def add_evals(self, n: int):
        with self._lock:
            self._eval_count += int(n)

    # entry access ----------------------------------------------------------
    def set(self, u, j, value: float, replace: bool = False):
        key = canonical_key(u, j)
        if key[0][-1] >= self.dim:
            raise ValueError(f"subset {key[0]} exceeds dimension {self.dim}")
        if not replace and key in self._entries:
            raise KeyError(f"duplicate coefficient for {key}")
        self._entries[key] = float(value)

    def get(self, u, j, default=None):
        return self._entries.get(canonical_key(u, j), default)

    def __getitem__(self, key):
        return self._entries[canonical_key(*key)]

    def __contains__(self, key):
        return canonical_key(*key) in self._entries

    def __len__(self):
        return len(self._entries)

    def items(self):
        return self._entries.items()

    def remove_subset(self, u):
        u = tuple(sorted(u))
        for key in [k for k in self._entries if k[0] == u]:
            del self._entries[key]

    def set_subset(self, u, coeffs: np.ndarray, max_order: int | None = None):
        """Store every order of an order-tensor ``coeffs[j1-1, ..., jk-1]``.

        ``max_order`` keeps only entries with ``max(j) <= max_order``.
        """
        u = tuple(u)
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.ndim != len(u):
            raise ValueError("coefficient tensor rank must equal |u|")
        for idx in np.ndindex(*coeffs.shape):
            j = tuple(i + 1 for i in idx)
            if max_order is not None and max(j) > max_order:
                continue
            self.set(u, j, coeffs[idx], replace=True)

    def subsets(self) -> list[tuple[int, ...]]:
        seen = {k[0] for k in self._entries}
        return sorted(seen, key=lambda u: (len(u), u))

    def subset_order(self, u) -> int:
        """Largest infinity-norm over the stored multi-indices of ``u``."""
        u = tuple(sorted(u))
        return max((max(k[1]) for k in self._entries if k[0] == u), default=0)

    def max_order(self) -> int:
        return max((max(k[1]) for k in self._entries), default=0)

    def max_cardinality(self) -> int:
        return max((len(k[0]) for k in self._entries), default=0)

    # statistics ------------------------------------------------------------
    def mean(self) -> float:
        return self.y_empty

    def variance(self) -> float:
        return math.fsum(c * c for c in self._entries.values())

    def component_variance(self, u, order: int | None = None) -> float:
        u = tuple(sorted(u))
        return math.fsum(
            c * c for k, c in self._entries.items() if k[0] == u and (order is None or max(k[1]) <= order)
        )

    def component_variances(self) -> dict[tuple[int, ...], float]:
        out: dict[tuple, list] = defaultdict(list)
        for k, c in self._entries.items():
            out[k[0]].append(c * c)
        return {u: math.fsum(v) for u, v in sorted(out.items(), key=lambda kv: (len(kv[0]), kv[0]))}

    def sensitivity_indices(self) -> dict[tuple[int, ...], float]:
        var = self.variance()
        if var == 0.0:
            raise UndefinedSensitivityError("sensitivity indices are undefined for a zero-variance expansion")
        return {u: s / var for u, s in self.component_variances().items()}

    def count(self) -> int:
        return count_adaptive(self)

    # serialization ---------------------------------------------------------
    def to_dict(self) -> dict:
        entries = [
            {"u": [i + 1 for i in u], "j": list(j), "c": c}
            for (u, j), c in sorted(self._entries.items(), key=lambda kv: (len(kv[0][0]), kv[0]))
        ]
        return {
            "format": "pdduq-store",
            "version": 1,
            "dim": self.dim,
            "y_empty": self.y_empty,
            "eval_count": self._eval_count,
            "entries": entries,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CoefficientStore":
        if data.get("format") != "pdduq-store":
            raise ValueError("not a coefficient store document")
        store = cls(int(data["dim"]), float(data["y_empty"]))
        for e in data["entries"]:
            store.set([i - 1 for i in e["u"]], e["j"], float(e["c"]))
        store._eval_count = int(data.get("eval_count", 0))
        return store

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def loads(cls, text: str) -> "CoefficientStore":
        return cls.from_dict(json.loads(text))

    def copy(self) -> "CoefficientStore":
        out = CoefficientStore(self.dim, self.y_empty)
        out._entries = dict(self._entries)
        out._eval_count = self._eval_count
        return out


def count_truncated(N: int, S: int, m: int) -> int:
    """Number of coefficients (including ``y_empty``) of the ``S``-variate, order-``m`` truncation."""
    if not 0 <= S <= N:
        raise ValueError("require 0 <= S <= N")
    if m < 1:
        raise ValueError("require m >= 1")
    return sum(math.comb(N, k) * m**k for k in range(S + 1))


def count_adaptive(store: CoefficientStore) -> int:
    """Number of coefficients of an adaptive expansion, ``y_empty`` included."""
    return 1 + len(store)


class SurrogateModel:
    """A PDD surrogate: coefficients, per-variable bases and the input law.

    ``evaluate`` takes standardized points; ``evaluate_physical`` maps
    physical points first.
    """

    def __init__(self, store: CoefficientStore, bases: Sequence, random_input=None):
        if len(bases) != store.dim:
            raise ValueError("need one basis per variable")
        self.store = store
        self.bases = list(bases)
        self.input = random_input
        self._groups = None

    @property
    def dim(self) -> int:
        return self.store.dim

    def _grouped(self):
        """Per subset: ``(u, dense coefficient tensor)`` indexed by ``j - 1``."""
        if self._groups is None:
            groups: dict[tuple, list] = defaultdict(list)
            for (u, j), c in self.store.items():
                groups[u].append((j, c))
            self._groups = []
            for u, entries in sorted(groups.items()):
                J = np.array([j for j, _ in entries], dtype=int)
                dense = np.zeros(tuple(J.max(axis=0)))
                dense[tuple((J - 1).T)] = [c for _, c in entries]
                self._groups.append((u, dense))
        return self._groups

    def evaluate(self, z, block: int = 8192) -> np.ndarray | float:
        z = np.asarray(z, dtype=float)
        single = z.ndim == 1
        z = np.atleast_2d(z)
        if z.shape[1] != self.dim:
            raise ValueError(f"expected points with {self.dim} coordinates, got shape {z.shape}")
        groups = self._grouped()
        orders = np.zeros(self.dim, dtype=int)
        for u, dense in groups:
            for p, i in enumerate(u):
                orders[i] = max(orders[i], dense.shape[p])
        out = np.empty(len(z))
        for start in range(0, len(z), block):
            zb = z[start : start + block]
            tables = {i: self.bases[i].eval_all(zb[:, i], int(orders[i]))[1:] for i in range(self.dim) if orders[i]}
            acc = np.full(len(zb), self.store.y_empty)
            for u, dense in groups:
                # contract the last axis by matrix product, the others pointwise
                shape = dense.shape
                r = dense.reshape(-1, shape[-1]) @ tables[u[-1]][: shape[-1]]
                r = r.reshape(shape[:-1] + (len(zb),))
                for p in range(len(u) - 2, -1, -1):
                    r = np.einsum("...in,in->...n", r, tables[u[p]][: shape[p]])
                acc += r
            out[start : start + block] = acc
        return float(out[0]) if single else out

    __call__ = evaluate

    def evaluate_physical(self, x):
        if self.input is None:
            raise ValueError("surrogate has no attached random input")
        return self.evaluate(self.input.to_standard(x))

    def mean(self) -> float:
        return self.store.mean()

    def variance(self) -> float:
        return self.store.variance()


def surrogate_mean(model: SurrogateModel) -> float:
    return model.store.y_empty


def surrogate_variance(model: SurrogateModel) -> float:
    return model.store.variance()


def evaluate_surrogate(model: SurrogateModel, x):
    return model.evaluate(x)


def store_from_entries(dim: int, y_empty: float, entries: Iterable[tuple]) -> CoefficientStore:
    store = CoefficientStore(dim, y_empty)
    for u, j, c in entries:
        store.set(u, j, c)
    return store
