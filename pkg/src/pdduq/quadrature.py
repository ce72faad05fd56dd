"""Dimension-reduction integration of PDD coefficients.

An ``N``-dimensional expectation ``E[g(Z)]`` is approximated by a signed sum
of at most ``R``-dimensional integrals anchored at a reference point ``c``:

.. math::

    E[g] \\approx \\sum_{i=0}^{R} (-1)^i \\binom{N-R+i-1}{i}
        \\sum_{|v| = R-i} \\int g(z_v, c_{-v})\\, d\\mu(z_v).

Each low-dimensional integral uses either a tensor Gauss rule
(:class:`FullGridEngine`) or the nested FSI sparse grid (:class:`FsiEngine`).
A coefficient ``C_{u,j}`` only receives contributions from subsets ``v``
containing ``u``; for ``R < |u|`` it is therefore estimated as zero.
"""

from __future__ import annotations

import csv
import itertools
import math
from typing import Sequence

import numpy as np

from .evaluation import ModelEvaluator
from .fsi import FsiLevelError, fsi_point_count, fsi_rule
from .orthopoly import OrthonormalBasis, build_basis
from .random_input import RandomInput
from .store import CoefficientStore

__all__ = [
    "dimred_weights",
    "DimRedPlan",
    "OrderTooHighError",
    "FullGridEngine",
    "FsiEngine",
    "estimate_coeffs_fullgrid",
    "estimate_coeffs_fsi",
    "grid_point_count",
    "fullgrid_point_bound",
]


class OrderTooHighError(ValueError):
    """The requested polynomial order exceeds what the grid integrates reliably."""


def dimred_weights(N: int, R: int) -> list[tuple[int, int]]:
    """Layer coefficients ``(i, (-1)^i C(N-R+i-1, i))`` for ``i = 0..R``."""
    if not 0 <= R <= N:
        raise ValueError(f"require 0 <= R <= N, got R={R}, N={N}")
    out = []
    for i in range(R + 1):
        top = N - R + i - 1
        coeff = 1 if i == 0 else (math.comb(top, i) if top >= 0 else 0)
        out.append((i, (-1) ** i * coeff))
    return out


class DimRedPlan:
    """Subsets and signed weights of a dimension-reduction rule.

    Attributes
    ----------
    terms : list of (tuple, int)
        ``(v, coefficient)`` for every subset ``v`` with a nonzero layer
        coefficient, ordered by decreasing ``|v|`` then lexicographically.
    """

    def __init__(self, N: int, R: int, reference: Sequence[float]):
        self.N = int(N)
        self.R = int(R)
        self.reference = np.asarray(reference, dtype=float)
        if self.reference.shape != (self.N,):
            raise ValueError("reference point must have N coordinates")
        self.layers = dimred_weights(self.N, self.R)
        self.terms = []
        for i, coeff in self.layers:
            if coeff == 0:
                continue
            for v in itertools.combinations(range(self.N), self.R - i):
                self.terms.append((v, coeff))

    def terms_containing(self, u):
        u = set(u)
        return [(v, c) for v, c in self.terms if u.issubset(v)]


def _contract(tensor: np.ndarray, mats: Sequence[np.ndarray]) -> np.ndarray:
    """Contract axis ``k`` of ``tensor`` with ``mats[k]`` (shape ``(q_k, n_k)``)."""
    order = sorted(range(len(mats)), key=lambda k: mats[k].shape[0])
    for k in order:
        tensor = np.moveaxis(np.tensordot(mats[k], tensor, axes=([1], [k])), 0, k)
    return tensor


class _DimRedEngine:
    """Shared machinery: model evaluation per subset and coefficient caching."""

    def __init__(self, model, random_input: RandomInput, R: int | None = None, reference=None, bases=None,
                 max_order: int = 16, evaluator: ModelEvaluator | None = None, budget=None, threads: int = 1):
        self.input = random_input
        N = random_input.dim
        self.R = N if R is None else int(R)
        ref = random_input.standard_mean() if reference is None else np.asarray(reference, dtype=float)
        self.plan = DimRedPlan(N, self.R, ref)
        self.bases = list(bases) if bases is not None else [build_basis(m, max_order) for m in random_input.marginals]
        self.evaluator = evaluator or ModelEvaluator(model, random_input, budget=budget, threads=threads)
        self._values: dict[tuple, np.ndarray] = {}
        self._coeffs: dict[tuple, np.ndarray] = {}
        self._means: dict[int, float] = {}

    @property
    def dim(self) -> int:
        return self.input.dim

    @property
    def eval_count(self) -> int:
        return self.evaluator.eval_count

    @property
    def n_outputs(self) -> int:
        if self.evaluator.n_outputs is None:
            self._subset_values(self.plan.terms[-1][0])
        return self.evaluator.n_outputs

    def _full_points(self, v, zv: np.ndarray) -> np.ndarray:
        z = np.broadcast_to(self.plan.reference, (len(zv), self.dim)).copy()
        if len(v):
            z[:, list(v)] = zv
        return z

    def _subset_values(self, v) -> np.ndarray:
        if v not in self._values:
            zv = self._subset_points(v)
            self._values[v] = self.evaluator.evaluate_standard(self._full_points(v, zv))
        return self._values[v]

    def check_order(self, u, m: int):
        raise NotImplementedError

    def mean(self, output: int = 0) -> float:
        if output not in self._means:
            total = 0.0
            for v, coeff in self.plan.terms:
                total += coeff * self._integrate(v, (), 0, output)[()]
            self._means[output] = float(total)
        return self._means[output]

    def coefficients(self, u, m: int, output: int = 0) -> np.ndarray:
        """Estimates of ``C_{u,j}`` for all ``1 <= j_k <= m``; array of shape ``(m,) * |u|``."""
        u = tuple(sorted(u))
        if not u:
            raise ValueError("use mean() for the constant term")
        if m < 1:
            raise ValueError("order must be positive")
        key = (u, output)
        cached = self._coeffs.get(key)
        if cached is not None and cached.shape[0] >= m:
            return cached[(slice(0, m),) * len(u)].copy()
        for i in u:
            if m > self.bases[i].max_order:
                raise OrderTooHighError(f"order {m} exceeds basis max_order {self.bases[i].max_order} for variable {i + 1}")
        self.check_order(u, m)
        top = max(m, self._prefetch_order(u))
        total = np.zeros((top,) * len(u))
        for v, coeff in self.plan.terms_containing(u):
            total += coeff * self._integrate(v, u, top, output)
        self._coeffs[key] = total
        return total[(slice(0, m),) * len(u)].copy()

    def _prefetch_order(self, u) -> int:
        return 0

    def estimate(self, targets, output: int = 0) -> CoefficientStore:
        """Store with ``y_empty`` and every requested ``(u, j)`` coefficient."""
        store = CoefficientStore(self.dim, self.mean(output))
        by_subset: dict[tuple, list] = {}
        for u, j in targets:
            order = sorted(range(len(u)), key=lambda k: u[k])
            uu = tuple(u[k] for k in order)
            jj = tuple(j[k] for k in order)
            by_subset.setdefault(uu, []).append(jj)
        for u, js in by_subset.items():
            m = max(max(j) for j in js)
            c = self.coefficients(u, m, output)
            for j in js:
                store.set(u, j, c[tuple(k - 1 for k in j)], replace=True)
        store.add_evals(self.eval_count)
        return store


class FullGridEngine(_DimRedEngine):
    """Dimension-reduction integration with tensor-product Gauss rules.

    Parameters
    ----------
    model : callable
        Vectorized model on physical points.
    random_input : RandomInput
    R : int, optional
        Reduction order (default ``N``, plain tensor quadrature).
    n_points : int
        Gauss points per dimension.
    reference : array_like, optional
        Reference point in standardized space (default: standardized mean).
    """

    def __init__(self, model, random_input, R=None, n_points: int = 5, reference=None, **kw):
        super().__init__(model, random_input, R=R, reference=reference, **kw)
        self.n_points = int(n_points)
        if self.n_points < 1:
            raise ValueError("need at least one Gauss point per dimension")
        self.rules = [b.gauss_rule(self.n_points) for b in self.bases]

    def check_order(self, u, m):
        # psi_n vanishes at the n Gauss nodes; higher orders alias onto lower ones
        if m > self.n_points:
            raise OrderTooHighError(f"order {m} exceeds the {self.n_points}-point Gauss rule")

    def _prefetch_order(self, u) -> int:
        # the contraction over the other axes dominates, so take every order at once
        return min([self.n_points] + [self.bases[i].max_order for i in u])

    def _subset_points(self, v):
        if not v:
            return np.empty((1, 0))
        grids = np.meshgrid(*[self.rules[i].nodes for i in v], indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def _integrate(self, v, u, m, output):
        y = self._subset_values(v)[:, output]
        if not v:
            return np.asarray(y[0])
        tensor = y.reshape((self.n_points,) * len(v))
        mats = []
        for i in v:
            rule = self.rules[i]
            if i in u:
                psi = self.bases[i].eval_all(rule.nodes, m)[1:]
                mats.append(psi * rule.weights)
            else:
                mats.append(rule.weights[None, :])
        out = _contract(tensor, mats)
        keep = tuple(slice(None) if i in u else 0 for i in v)
        return out[keep]

    def point_bound(self) -> int:
        """Evaluation count without any sharing between subsets."""
        return sum(self.n_points ** len(v) for v, _ in self.plan.terms)

    def dump_grid(self, path):
        """Write ``subset, coordinates..., weight`` rows (standardized space)."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["subset", "layer_coefficient"] + [f"z{i + 1}" for i in range(self.dim)] + ["weight"])
            for v, coeff in self.plan.terms:
                zv = self._subset_points(v)
                if v:
                    wts = np.ones(len(zv))
                    grids = np.meshgrid(*[self.rules[i].weights for i in v], indexing="ij")
                    for g in grids:
                        wts = wts * g.ravel()
                else:
                    wts = np.ones(1)
                label = "{" + ",".join(str(i + 1) for i in v) + "}"
                for z, wt in zip(self._full_points(v, zv), wts):
                    w.writerow([label, coeff] + [repr(float(t)) for t in z] + [repr(float(wt))])


class FsiEngine(_DimRedEngine):
    """Dimension-reduction integration with the nested FSI sparse grid.

    All marginals must standardize to the standard Gaussian.
    """

    def __init__(self, model, random_input, R=None, level: int = 3, reference=None, **kw):
        random_input.require_standard("normal")
        super().__init__(model, random_input, R=R, reference=reference, **kw)
        self.level = int(level)
        fsi_rule(1, self.level)  # validates the level

    def check_order(self, u, m):
        if m > 2 * self.level + 1:
            raise OrderTooHighError(f"order {m} exceeds the exactness degree {2 * self.level + 1} of FSI level {self.level}")

    def _subset_points(self, v):
        if not v:
            return np.empty((1, 0))
        return np.array(fsi_rule(len(v), self.level)[0])

    def _integrate(self, v, u, m, output):
        y = self._subset_values(v)[:, output]
        if not v:
            return np.asarray(y[0])
        pts, wts = fsi_rule(len(v), self.level)
        wy = wts * y
        if not u:
            return np.asarray(np.sum(wy))
        pos = [v.index(i) for i in u]
        tables = [self.bases[i].eval_all(pts[:, p], m)[1:] for i, p in zip(u, pos)]
        letters = "abcdefghijklmnopqrstuvwxyz"
        subscripts = ",".join(f"{letters[k]}z" for k in range(len(u))) + ",z->" + letters[: len(u)]
        return np.einsum(subscripts, *tables, wy, optimize=True)

    def dump_grid(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["subset", "layer_coefficient"] + [f"z{i + 1}" for i in range(self.dim)] + ["weight"])
            for v, coeff in self.plan.terms:
                if v:
                    pts, wts = fsi_rule(len(v), self.level)
                else:
                    pts, wts = np.empty((1, 0)), np.ones(1)
                label = "{" + ",".join(str(i + 1) for i in v) + "}"
                for z, wt in zip(self._full_points(v, pts), wts):
                    w.writerow([label, coeff] + [repr(float(t)) for t in z] + [repr(float(wt))])


def estimate_coeffs_fullgrid(model, random_input, targets, R=None, n_points=5, reference=None, output=0, **kw):
    """Estimate ``y_empty`` and the target coefficients on a full grid."""
    engine = FullGridEngine(model, random_input, R=R, n_points=n_points, reference=reference, **kw)
    return engine.estimate(targets, output)


def estimate_coeffs_fsi(model, random_input, targets, R=None, level=3, reference=None, output=0, **kw):
    """Estimate ``y_empty`` and the target coefficients on the FSI sparse grid."""
    engine = FsiEngine(model, random_input, R=R, level=level, reference=reference, **kw)
    return engine.estimate(targets, output)


def fullgrid_point_bound(N: int, R: int, n_points: int) -> int:
    """Evaluation count of a full-grid campaign if no points were shared."""
    return sum(
        math.comb(N, R - i) * n_points ** (R - i) for i, coeff in dimred_weights(N, R) if coeff != 0
    )


def grid_point_count(kind: str, dim: int, level: int) -> int:
    """Points of the ``dim``-dimensional rule exact to total degree ``2*level - 1``.

    ``kind`` is ``"fullgrid"`` (``level**dim`` Gauss points) or ``"fsi"``
    (nested sparse grid at FSI level ``level - 1``).
    """
    if dim < 1:
        raise ValueError("dimension must be positive")
    if not 1 <= level <= 5:
        raise ValueError(f"level must lie in 1..5, got {level}")
    if kind == "fullgrid":
        return level**dim
    if kind == "fsi":
        return fsi_point_count(dim, level - 1)
    raise ValueError(f"unknown grid kind {kind!r}")
