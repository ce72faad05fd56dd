"""Reference ANOVA and anchored (cut-HDMR) decompositions for small ``N``.

These routines use dense tensor quadrature and exist to verify properties
of the decompositions (zero means, orthogonality, error bounds of the
anchored truncation relative to the ANOVA truncation); they are limited to
``N <= 4``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .orthopoly import build_basis
from .random_input import RandomInput

__all__ = [
    "AnovaTable",
    "add_decompose",
    "rdd_coefficient",
    "RddSurrogate",
    "rdd_decompose",
    "theorem1_bounds",
    "check_theorem1",
    "truncation_error_bound",
    "tail_variance",
    "QuadratureConvergenceError",
]

MAX_REFERENCE_DIM = 4


class QuadratureConvergenceError(RuntimeError):
    """Raised when doubling the quadrature order does not settle a result."""


def _subsets(N, max_size=None):
    top = N if max_size is None else max_size
    for k in range(top + 1):
        yield from itertools.combinations(range(N), k)


@dataclass
class AnovaTable:
    """ANOVA component functions tabulated on a tensor Gauss grid.

    ``components[u]`` has shape ``(n,) * |u|`` and holds ``y_u`` at the
    standardized nodes ``nodes[i]`` of the variables in ``u``; the empty
    subset maps to a 0-d array holding the mean.
    """

    nodes: list
    weights: list
    components: dict = field(default_factory=dict)
    values: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return len(self.nodes)

    @property
    def mean(self) -> float:
        return float(self.components[()])

    def expand(self, u) -> np.ndarray:
        """``y_u`` broadcast to the full ``N``-dimensional grid."""
        comp = self.components[tuple(u)]
        shape = [len(self.nodes[i]) if i in u else 1 for i in range(self.dim)]
        return comp.reshape(shape)

    def expectation(self, tensor: np.ndarray) -> float:
        t = np.broadcast_to(tensor, tuple(len(n) for n in self.nodes))
        for w in reversed(self.weights):
            t = t @ w
        return float(t)

    def variance(self, u) -> float:
        return self.expectation(self.expand(u) ** 2)


def _tensor_grid(random_input: RandomInput, n: int):
    bases = [build_basis(m, max(n - 1, 1)) for m in random_input.marginals]
    rules = [b.gauss_rule(n) for b in bases]
    nodes = [r.nodes for r in rules]
    weights = [r.weights for r in rules]
    grids = np.meshgrid(*nodes, indexing="ij")
    z = np.stack([g.ravel() for g in grids], axis=1)
    return nodes, weights, z


def _tabulate(model, random_input, n):
    nodes, weights, z = _tensor_grid(random_input, n)
    y = np.asarray(model(random_input.from_standard(z)), dtype=float)
    if y.ndim != 1:
        raise ValueError("reference decompositions need a scalar model")
    return nodes, weights, y.reshape((n,) * random_input.dim)


def _integrate_axes(tensor, weights, axes):
    """Integrate ``tensor`` over ``axes`` keeping them as size-1 dimensions."""
    for a in sorted(axes, reverse=True):
        tensor = np.expand_dims(np.tensordot(tensor, weights[a], axes=([a], [0])), a)
    return tensor


def add_decompose(model: Callable, random_input: RandomInput, quad_order: int = 16) -> AnovaTable:
    """ANOVA decomposition on an ``quad_order``-point tensor Gauss grid.

    Component functions follow from the projections ``E[y | x_v]`` by
    inclusion-exclusion, ``y_u = sum_{v subset u} (-1)^{|u|-|v|} E[y | x_v]``.
    """
    N = random_input.dim
    if N > MAX_REFERENCE_DIM:
        raise ValueError(f"reference decompositions support N <= {MAX_REFERENCE_DIM}, got {N}")
    nodes, weights, Y = _tabulate(model, random_input, quad_order)
    proj = {}
    for v in _subsets(N):
        rest = [i for i in range(N) if i not in v]
        t = _integrate_axes(Y, weights, rest)
        proj[v] = t.reshape([quad_order] * len(v)) if v else t.reshape(())
    table = AnovaTable(nodes, weights, values=Y)
    for u in _subsets(N):
        acc = np.zeros([quad_order] * len(u)) if u else np.zeros(())
        for k in range(len(u) + 1):
            for v in itertools.combinations(u, k):
                # broadcast E[y | x_v] over the axes of u
                shape = [quad_order if i in v else 1 for i in u]
                acc = acc + (-1) ** (len(u) - k) * proj[v].reshape(shape)
        table.components[u] = acc
    return table


def rdd_coefficient(N: int, S: int, size: int) -> int:
    """Weight ``(-1)^{S-|v|} C(N-|v|-1, S-|v|)`` of a cut function with ``|v| = size``."""
    if size > S:
        return 0
    top, k = N - size - 1, S - size
    if k == 0:
        return 1
    return (-1) ** k * (math.comb(top, k) if top >= 0 else 0)


class RddSurrogate:
    """``S``-variate truncated anchored decomposition of a model.

    ``yhat(x) = sum_{|v| <= S} b_{|v|} y(x_v, c_{-v})`` with
    ``b_s = (-1)^{S-s} C(N-s-1, S-s)``.  Works in whatever coordinates the
    model and ``reference`` use.
    """

    def __init__(self, model: Callable, reference, S: int):
        self.model = model
        self.reference = np.asarray(reference, dtype=float)
        self.N = len(self.reference)
        if not 0 <= S <= self.N:
            raise ValueError("require 0 <= S <= N")
        self.S = int(S)
        self.terms = [(v, rdd_coefficient(self.N, self.S, len(v))) for v in _subsets(self.N, self.S)]
        self.terms = [(v, b) for v, b in self.terms if b != 0]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[1] != self.N:
            raise ValueError(f"expected {self.N} coordinates, got shape {x.shape}")
        out = np.zeros(len(x))
        for v, b in self.terms:
            pts = np.broadcast_to(self.reference, x.shape).copy()
            if v:
                pts[:, list(v)] = x[:, list(v)]
            try:
                y = np.asarray(self.model(pts), dtype=float)
            except Exception as exc:
                raise RuntimeError(f"model evaluation failed on the cut through subset {v}: {exc}") from exc
            out += b * y
        return float(out[0]) if single else out


def rdd_decompose(model: Callable, reference, S: int) -> RddSurrogate:
    return RddSurrogate(model, reference, S)


def theorem1_bounds(N: int, S: int) -> tuple[float, float]:
    """Factors ``(2^{S+1}, 1 + sum_k C(N-S+k-1, k)^2 C(N, S-k))`` bounding ``E[e_SR] / e_SA``."""
    if not 0 <= S < N:
        raise ValueError("require 0 <= S < N")
    upper = 1 + sum(math.comb(N - S + k - 1, k) ** 2 * math.comb(N, S - k) for k in range(S + 1))
    return float(2 ** (S + 1)), float(upper)


def _errors_on_grid(model, random_input, S, n):
    table = add_decompose(model, random_input, n)
    N = random_input.dim
    Y = table.values
    resid = Y.copy()
    for u in _subsets(N, S):
        resid = resid - table.expand(u)
    e_sa = table.expectation(resid**2)
    second = table.expectation(Y**2)

    # E_c E_x[(y(x) - sum_v b_v y(x_v, c_{-v}))^2]: every cut function is the
    # tabulated Y read with coordinate i taken from x (i in v) or from c.
    terms = [(v, rdd_coefficient(N, S, len(v))) for v in _subsets(N, S)]
    terms = [(v, b) for v, b in terms if b != 0]
    xl = list(range(N))
    cl = [N + i for i in range(N)]

    def labels(v):
        return [xl[i] if i in v else cl[i] for i in range(N)]

    def pair(la, lb):
        used = sorted(set(la) | set(lb))
        ops = [Y, la, Y, lb]
        for lab in used:
            ops += [table.weights[lab % N], [lab]]
        return float(np.einsum(*ops, [], optimize=True))

    full = labels(tuple(range(N)))
    e_sr = pair(full, full)
    for v, b in terms:
        e_sr -= 2.0 * b * pair(full, labels(v))
    for v, b in terms:
        for w, c in terms:
            e_sr += b * c * pair(labels(v), labels(w))
    return e_sa, e_sr, second


def check_theorem1(model: Callable, random_input: RandomInput, S: int, quad_order: int = 8,
                   rtol: float = 1e-6, max_order: int = 128, slack: float = 1e-6) -> dict:
    """Compare the ANOVA and anchored truncation errors with their bounds.

    ``e_SA`` is the mean-square error of the ``S``-variate ANOVA truncation and
    ``expected_e_SR`` the mean-square error of the ``S``-variate anchored
    truncation averaged over reference points drawn from the input law.
    Both integrals use the same tensor Gauss rule, doubled from
    ``quad_order`` until ``expected_e_SR`` changes by less than ``rtol``
    relative to itself, or to ``E[y^2]`` when it is at roundoff level.

    Returns
    -------
    dict
        ``e_SA``, ``expected_e_SR``, ``lower`` and ``upper`` (bound values),
        ``quad_order`` used and ``holds`` (bounds satisfied within ``slack``).
    """
    N = random_input.dim
    if N > 3:
        raise ValueError("the bound check supports N <= 3")
    lo_f, up_f = theorem1_bounds(N, S)
    n = int(quad_order)
    prev = None
    while True:
        e_sa, e_sr, second = _errors_on_grid(model, random_input, S, n)
        # e_SR is a sum of cancelling terms of size E[y^2]
        floor = max(1e-12 * second, 1e-300)
        if prev is not None and abs(e_sr - prev) <= max(rtol * abs(e_sr), floor):
            break
        if 2 * n > max_order:
            raise QuadratureConvergenceError(f"expected anchored error not converged at {n} points per axis")
        prev = e_sr
        n *= 2
    lower, upper = lo_f * e_sa, up_f * e_sa
    scale = max(abs(e_sr), abs(upper), 1.0)
    holds = lower - slack * scale <= e_sr <= upper + slack * scale
    return {
        "e_SA": e_sa,
        "expected_e_SR": e_sr,
        "lower": lower,
        "upper": upper,
        "lower_factor": lo_f,
        "upper_factor": up_f,
        "quad_order": n,
        "holds": bool(holds),
    }


def truncation_error_bound(N: int, c_const: float, q_rate: float, S: int) -> float:
    """``c * sum_{s=S+1}^{N} C(N, s) q^{-s}``: the tail variance when ``sigma_u^2 = c q^{-|u|}``."""
    if not q_rate > 1:
        raise ValueError("decay rate q must exceed 1")
    if not c_const > 0:
        raise ValueError("constant c must be positive")
    if not 0 <= S <= N:
        raise ValueError("require 0 <= S <= N")
    return c_const * math.fsum(math.comb(N, s) * q_rate ** (-s) for s in range(S + 1, N + 1))


def tail_variance(component_variances: dict, S: int) -> float:
    """Sum of the component variances of subsets with more than ``S`` variables."""
    return math.fsum(v for u, v in component_variances.items() if len(u) > S)
