"""Measure-consistent orthonormal polynomials and Gauss quadrature rules.

Polynomials are defined by the orthonormal three-term recurrence

.. math::

    \\sqrt{\\beta_{k+1}}\\,\\psi_{k+1}(x) = (x - \\alpha_k)\\psi_k(x) - \\sqrt{\\beta_k}\\,\\psi_{k-1}(x),

with :math:`\\psi_0 = 1` for a probability measure (:math:`\\beta_0 = 1`).
Closed-form coefficients are used for the standard Gaussian (Hermite) and
uniform (Legendre) measures; any other density goes through a discretized
Stieltjes procedure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .linalg import jacobi_eigh
from .random_input import Custom, Marginal, _support_map

__all__ = [
    "Recurrence",
    "OrthonormalBasis",
    "GaussRule",
    "MomentDivergenceError",
    "hermite_recurrence",
    "legendre_recurrence",
    "stieltjes_recurrence",
    "build_basis",
    "gauss_rule",
    "gauss_rule_from_recurrence",
]

DEFAULT_MAX_ORDER = 16


class MomentDivergenceError(RuntimeError):
    """Raised when discretized inner products fail to converge."""


@dataclass(frozen=True)
class Recurrence:
    """Recurrence coefficients ``alpha[k]`` and ``beta[k]`` (``beta[0]`` is the total mass)."""

    alpha: tuple
    beta: tuple
    max_order: int

    def __post_init__(self):
        if len(self.alpha) < self.max_order + 1 or len(self.beta) < self.max_order + 1:
            raise ValueError("recurrence tables shorter than max_order + 1")
        if any(not b > 0 for b in self.beta):
            raise ValueError("recurrence norms beta must be positive")

    def truncated(self, max_order: int) -> "Recurrence":
        return Recurrence(self.alpha[: max_order + 1], self.beta[: max_order + 1], max_order)


def hermite_recurrence(max_order: int) -> Recurrence:
    """Probabilists' Hermite recurrence for the standard Gaussian measure."""
    n = max_order + 1
    return Recurrence(tuple([0.0] * n), tuple([1.0] + [float(k) for k in range(1, n)]), max_order)


def legendre_recurrence(max_order: int, convention: str = "unit") -> Recurrence:
    """Legendre recurrence for the uniform probability measure.

    ``convention="unit"`` targets ``[0, 1]`` and ``"symmetric"`` targets ``[-1, 1]``.
    """
    n = max_order + 1
    k = np.arange(1, n, dtype=float)
    b = k * k / (4.0 * k * k - 1.0)
    if convention == "unit":
        return Recurrence(tuple([0.5] * n), tuple([1.0] + list(b / 4.0)), max_order)
    if convention == "symmetric":
        return Recurrence(tuple([0.0] * n), tuple([1.0] + list(b)), max_order)
    raise ValueError(f"unknown uniform convention {convention!r}")


def _vector_density(density):
    def f(x):
        try:
            y = np.asarray(density(x), dtype=float)
            if y.shape == x.shape:
                return y
        except Exception:
            pass
        return np.array([float(density(s)) for s in x])

    return f


def _discretize(density, lower, upper, panels, points=8):
    """Composite Gauss-Legendre discretization of a density on its support."""
    xmap, dxdt = _support_map(lower, upper)
    g, gw = np.polynomial.legendre.leggauss(points)
    edges = np.linspace(0.0, 1.0, panels + 1)
    h = np.diff(edges)
    t = (edges[:-1, None] + 0.5 * h[:, None] * (g[None, :] + 1.0)).ravel()
    wt = (0.5 * h[:, None] * gw[None, :]).ravel()
    x = xmap(t)
    w = wt * dxdt(t) * _vector_density(density)(x)
    keep = np.isfinite(x) & np.isfinite(w) & (w > 0)
    if np.any(~np.isfinite(w)):
        raise MomentDivergenceError("density is not finite on the discretization grid")
    x, w = x[keep], w[keep]
    mass = w.sum()
    if not mass > 0:
        raise MomentDivergenceError("density has no mass on its support")
    return x, w / mass, mass


def _stieltjes_orthonormal(x, w, n):
    """Stieltjes procedure written directly on orthonormal polynomials."""
    alpha = np.zeros(n)
    beta = np.zeros(n)
    beta[0] = 1.0
    q_prev = np.zeros_like(x)
    q = np.ones_like(x)
    for k in range(n):
        alpha[k] = np.sum(w * x * q * q)
        if k + 1 == n:
            break
        r = (x - alpha[k]) * q - math.sqrt(beta[k]) * q_prev if k > 0 else (x - alpha[k]) * q
        b = np.sum(w * r * r)
        if not b > 0 or not math.isfinite(b):
            raise MomentDivergenceError(f"inner products degenerate at order {k + 1}")
        beta[k + 1] = b
        q_prev, q = q, r / math.sqrt(b)
    return alpha, beta


def stieltjes_recurrence(
    density,
    lower: float,
    upper: float,
    max_order: int,
    panels: int = 4096,
    tol: float = 1e-12,
    max_doublings: int = 4,
) -> Recurrence:
    """Recurrence coefficients of an arbitrary density by the Stieltjes procedure.

    Inner products are discretized with an 8-point Gauss-Legendre rule on each
    of ``panels`` panels of the (possibly mapped) support.  The panel count is
    doubled until the coefficients change by less than ``tol`` relative to
    their size.

    Raises
    ------
    MomentDivergenceError
        If the coefficients do not stabilize within ``max_doublings`` doublings.
    """
    n = max_order + 1
    prev = None
    for _ in range(max_doublings + 1):
        x, w, _ = _discretize(density, lower, upper, panels)
        a, b = _stieltjes_orthonormal(x, w, n)
        cur = np.concatenate([a, b])
        if prev is not None:
            scale = np.maximum(np.abs(cur), 1.0)
            if np.all(np.abs(cur - prev) <= tol * scale):
                return Recurrence(tuple(a), tuple(b), max_order)
        prev = cur
        panels *= 2
    raise MomentDivergenceError(
        f"recurrence coefficients did not stabilize to {tol:g} after {max_doublings} doublings"
    )


@dataclass(frozen=True)
class GaussRule:
    """Gauss quadrature rule for a probability measure."""

    nodes: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.nodes)

    def integrate(self, f):
        return np.asarray(f(self.nodes)) @ self.weights


@lru_cache(maxsize=256)
def _gauss_cached(rec: Recurrence, n: int):
    alpha = np.asarray(rec.alpha[:n], dtype=float)
    off = np.sqrt(np.asarray(rec.beta[1:n], dtype=float))
    jac = np.diag(alpha) + np.diag(off, 1) + np.diag(off, -1)
    nodes, vecs = jacobi_eigh(jac)
    weights = rec.beta[0] * vecs[0, :] ** 2
    if np.all(alpha == alpha[0]):
        # symmetric measure: enforce exact mirror symmetry about the center
        c = alpha[0]
        nodes = 0.5 * ((nodes - c) - (nodes[::-1] - c)) + c
        weights = 0.5 * (weights + weights[::-1])
        if n % 2:
            nodes[n // 2] = c
    weights = weights / weights.sum() * rec.beta[0]
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def gauss_rule_from_recurrence(rec: Recurrence, n: int) -> GaussRule:
    if not 1 <= n <= rec.max_order + 1:
        raise ValueError(f"Gauss rule size must satisfy 1 <= n <= {rec.max_order + 1}, got {n}")
    nodes, weights = _gauss_cached(rec, int(n))
    return GaussRule(nodes, weights)


class OrthonormalBasis:
    """Orthonormal polynomials of one standardized variable.

    Parameters
    ----------
    recurrence : Recurrence
        Three-term recurrence coefficients.
    marginal : Marginal, optional
        The marginal whose standard measure the basis is orthonormal for.
    """

    def __init__(self, recurrence: Recurrence, marginal: Marginal | None = None):
        self.recurrence = recurrence
        self.marginal = marginal
        self._alpha = np.asarray(recurrence.alpha, dtype=float)
        self._sqrt_beta = np.sqrt(np.asarray(recurrence.beta, dtype=float))

    @property
    def max_order(self) -> int:
        return self.recurrence.max_order

    def __repr__(self):
        return f"OrthonormalBasis(max_order={self.max_order}, marginal={self.marginal!r})"

    def eval_all(self, x, order: int) -> np.ndarray:
        """Values of ``psi_0 .. psi_order`` at ``x``; result has shape ``(order + 1,) + x.shape``."""
        if order > self.max_order:
            raise ValueError(f"order {order} exceeds the basis max_order {self.max_order}")
        if order < 0:
            raise ValueError("order must be non-negative")
        x = np.asarray(x, dtype=float)
        out = np.empty((order + 1,) + x.shape)
        out[0] = 1.0
        if order >= 1:
            out[1] = (x - self._alpha[0]) / self._sqrt_beta[1]
        for k in range(1, order):
            out[k + 1] = ((x - self._alpha[k]) * out[k] - self._sqrt_beta[k] * out[k - 1]) / self._sqrt_beta[k + 1]
        return out

    def eval(self, j: int, x):
        """Value of ``psi_j`` at ``x``."""
        v = self.eval_all(x, j)[j]
        return v if v.ndim else float(v)

    __call__ = eval

    def gauss_rule(self, n: int) -> GaussRule:
        return gauss_rule_from_recurrence(self.recurrence, n)

    def monomial_coefficients(self, j: int) -> np.ndarray:
        """Power-basis coefficients (low to high) of ``psi_j``; for testing only."""
        if j > self.max_order:
            raise ValueError(f"order {j} exceeds the basis max_order {self.max_order}")
        P = np.polynomial.polynomial
        prev, cur = np.zeros(1), np.ones(1)
        for k in range(j):
            nxt = P.polysub(P.polymulx(cur), self._alpha[k] * cur)
            if k:
                nxt = P.polysub(nxt, self._sqrt_beta[k] * prev)
            prev, cur = cur, nxt / self._sqrt_beta[k + 1]
        return cur


def build_basis(marginal: Marginal, max_order: int = DEFAULT_MAX_ORDER, method: str = "auto") -> OrthonormalBasis:
    """Orthonormal basis for the standard measure of ``marginal``.

    ``method="auto"`` uses closed-form recurrences for Gaussian, lognormal and
    uniform marginals and the Stieltjes procedure otherwise;
    ``method="stieltjes"`` forces the numerical construction.
    """
    if max_order < 0:
        raise ValueError("max_order must be non-negative")
    std = marginal.standard
    if method == "auto" and std == "normal":
        rec = hermite_recurrence(max_order)
    elif method == "auto" and std in ("uniform01", "uniform11"):
        rec = legendre_recurrence(max_order, "unit" if std == "uniform01" else "symmetric")
    elif method in ("auto", "stieltjes"):
        if std == "normal":
            dens, lo, hi = (lambda z: np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)), -math.inf, math.inf
        elif std == "uniform01":
            dens, lo, hi = (lambda z: np.ones_like(z)), 0.0, 1.0
        elif std == "uniform11":
            dens, lo, hi = (lambda z: np.full_like(z, 0.5)), -1.0, 1.0
        elif isinstance(marginal, Custom):
            dens, lo, hi = marginal.density, marginal.lower, marginal.upper
        else:
            dens, lo = marginal.pdf, marginal.support[0]
            hi = marginal.support[1]
        rec = stieltjes_recurrence(dens, lo, hi, max_order)
    else:
        raise ValueError(f"unknown basis construction method {method!r}")
    return OrthonormalBasis(rec, marginal)


def gauss_rule(basis: OrthonormalBasis, n: int) -> GaussRule:
    """``n``-point Gauss rule of the basis measure (``1 <= n <= max_order + 1``)."""
    return basis.gauss_rule(n)
