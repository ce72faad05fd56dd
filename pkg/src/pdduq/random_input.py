"""Independent random inputs: marginals, densities, samplers and standardization.

Every marginal carries a *standard* measure on which its orthonormal basis is
built: standard normal for Gaussian and lognormal variables, the unit (or
symmetric) uniform for uniform variables, and the native measure for custom
densities.  Models are always evaluated in physical space; quadrature and
sampling engines work in the standard space and map back with
:meth:`RandomInput.from_standard`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, interpolate, special

__all__ = [
    "Marginal",
    "Uniform",
    "Gaussian",
    "Lognormal",
    "Custom",
    "RandomInput",
    "StandardizationError",
]

_SQRT2PI = math.sqrt(2.0 * math.pi)


class StandardizationError(ValueError):
    """Raised when a marginal cannot be mapped to the requested standard measure."""


def _check_unit_interval(u):
    u = np.asarray(u, dtype=float)
    if np.any(~(u > 0.0) | ~(u < 1.0)):
        raise ValueError("inverse_cdf requires 0 < u < 1")
    return u


class Marginal:
    """Base class for a univariate marginal distribution."""

    #: name of the measure the standardized variable follows
    standard = "custom"

    def pdf(self, x):
        raise NotImplementedError

    def cdf(self, x):
        raise NotImplementedError

    def inverse_cdf(self, u):
        raise NotImplementedError

    @property
    def mean(self) -> float:
        raise NotImplementedError

    @property
    def variance(self) -> float:
        raise NotImplementedError

    @property
    def support(self) -> tuple[float, float]:
        raise NotImplementedError

    @property
    def gaussian_standardizable(self) -> bool:
        return self.standard == "normal"

    def to_standard(self, x):
        return np.asarray(x, dtype=float)

    def from_standard(self, z):
        return np.asarray(z, dtype=float)

    def standard_inverse_cdf(self, u):
        """Inverse CDF of the standardized variable."""
        return self.to_standard(self.inverse_cdf(u))

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Uniform(Marginal):
    """Uniform on ``[a, b]``.

    ``convention`` selects the standard space: ``"unit"`` maps to ``[0, 1]``
    and ``"symmetric"`` to ``[-1, 1]``.
    """

    a: float = 0.0
    b: float = 1.0
    convention: str = "unit"

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError(f"uniform requires a < b, got a={self.a}, b={self.b}")
        if self.convention not in ("unit", "symmetric"):
            raise ValueError(f"unknown uniform convention {self.convention!r}")

    @property
    def standard(self):
        return "uniform01" if self.convention == "unit" else "uniform11"

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.a) & (x <= self.b)
        return np.where(inside, 1.0 / (self.b - self.a), 0.0)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.clip((x - self.a) / (self.b - self.a), 0.0, 1.0)

    def inverse_cdf(self, u):
        u = _check_unit_interval(u)
        return self.a + (self.b - self.a) * u

    @property
    def mean(self):
        return 0.5 * (self.a + self.b)

    @property
    def variance(self):
        return (self.b - self.a) ** 2 / 12.0

    @property
    def support(self):
        return (self.a, self.b)

    def to_standard(self, x):
        t = (np.asarray(x, dtype=float) - self.a) / (self.b - self.a)
        return t if self.convention == "unit" else 2.0 * t - 1.0

    def from_standard(self, z):
        z = np.asarray(z, dtype=float)
        t = z if self.convention == "unit" else 0.5 * (z + 1.0)
        return self.a + (self.b - self.a) * t

    def standard_inverse_cdf(self, u):
        u = _check_unit_interval(u)
        return u if self.convention == "unit" else 2.0 * u - 1.0

    def to_dict(self):
        return {"kind": "uniform", "a": self.a, "b": self.b}


@dataclass(frozen=True)
class Gaussian(Marginal):
    """Gaussian with mean ``mu`` and standard deviation ``sigma``."""

    mu: float = 0.0
    sigma: float = 1.0
    standard = "normal"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"gaussian requires sigma > 0, got {self.sigma}")

    def pdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mu) / self.sigma
        return np.exp(-0.5 * z * z) / (_SQRT2PI * self.sigma)

    def cdf(self, x):
        return special.ndtr((np.asarray(x, dtype=float) - self.mu) / self.sigma)

    def inverse_cdf(self, u):
        return self.mu + self.sigma * special.ndtri(_check_unit_interval(u))

    @property
    def mean(self):
        return float(self.mu)

    @property
    def variance(self):
        return float(self.sigma) ** 2

    @property
    def support(self):
        return (-math.inf, math.inf)

    def to_standard(self, x):
        return (np.asarray(x, dtype=float) - self.mu) / self.sigma

    def from_standard(self, z):
        return self.mu + self.sigma * np.asarray(z, dtype=float)

    def standard_inverse_cdf(self, u):
        return special.ndtri(_check_unit_interval(u))

    def to_dict(self):
        return {"kind": "gaussian", "mu": self.mu, "sigma": self.sigma}


@dataclass(frozen=True)
class Lognormal(Marginal):
    """Lognormal variable ``exp(mu_g + sigma_g Z)`` with ``Z`` standard normal."""

    mu_g: float = 0.0
    sigma_g: float = 1.0
    standard = "normal"

    def __post_init__(self):
        if not self.sigma_g > 0:
            raise ValueError(f"lognormal requires sigma_g > 0, got {self.sigma_g}")

    @classmethod
    def from_mean_cov(cls, mean: float, cov: float) -> "Lognormal":
        """Build from the physical mean and coefficient of variation."""
        if not mean > 0 or not cov > 0:
            raise ValueError("lognormal mean and cov must be positive")
        s2 = math.log1p(cov * cov)
        return cls(mu_g=math.log(mean) - 0.5 * s2, sigma_g=math.sqrt(s2))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = (np.log(x) - self.mu_g) / self.sigma_g
            f = np.exp(-0.5 * z * z) / (_SQRT2PI * self.sigma_g * x)
        return np.where(x > 0, f, 0.0)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            z = (np.log(np.where(x > 0, x, 1.0)) - self.mu_g) / self.sigma_g
        return np.where(x > 0, special.ndtr(z), 0.0)

    def inverse_cdf(self, u):
        return np.exp(self.mu_g + self.sigma_g * special.ndtri(_check_unit_interval(u)))

    @property
    def mean(self):
        return math.exp(self.mu_g + 0.5 * self.sigma_g**2)

    @property
    def variance(self):
        s2 = self.sigma_g**2
        return math.expm1(s2) * math.exp(2.0 * self.mu_g + s2)

    @property
    def support(self):
        return (0.0, math.inf)

    def to_standard(self, x):
        return (np.log(np.asarray(x, dtype=float)) - self.mu_g) / self.sigma_g

    def from_standard(self, z):
        return np.exp(self.mu_g + self.sigma_g * np.asarray(z, dtype=float))

    def standard_inverse_cdf(self, u):
        return special.ndtri(_check_unit_interval(u))

    def to_dict(self):
        return {"kind": "lognormal", "mu_g": self.mu_g, "sigma_g": self.sigma_g}


def _support_map(lower: float, upper: float):
    """Return ``(x(t), dx/dt)`` mapping ``t in (0, 1)`` onto the support."""
    if math.isfinite(lower) and math.isfinite(upper):
        return (lambda t: lower + (upper - lower) * t), (lambda t: np.full_like(t, upper - lower))
    if math.isfinite(lower):
        return (lambda t: lower + t / (1.0 - t)), (lambda t: 1.0 / (1.0 - t) ** 2)
    if math.isfinite(upper):
        return (lambda t: upper - (1.0 - t) / t), (lambda t: 1.0 / t**2)
    return (
        (lambda t: (2.0 * t - 1.0) / (t * (1.0 - t))),
        (lambda t: (2.0 * t * t - 2.0 * t + 1.0) / (t * (1.0 - t)) ** 2),
    )


@dataclass(frozen=True, eq=False)
class Custom(Marginal):
    """User-defined density on ``[lower, upper]`` (either bound may be infinite).

    The CDF is tabulated once by adaptive quadrature over panels of the
    support and interpolated monotonically; the density is renormalized so
    it integrates to one.
    """

    density: Callable = field(repr=False)
    lower: float = 0.0
    upper: float = 1.0
    panels: int = 512
    _table: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError("custom marginal requires lower < upper")
        if math.isinf(self.lower) and math.isinf(self.upper) and self.lower == self.upper:
            raise ValueError("degenerate support")
        xmap, _ = _support_map(self.lower, self.upper)
        # panel edges in t; open ends are kept off the singular endpoints
        t = np.linspace(0.0, 1.0, self.panels + 1)
        if math.isinf(self.lower):
            t[0] = 1e-12
        if math.isinf(self.upper):
            t[-1] = 1.0 - 1e-12
        edges = xmap(t)
        f = lambda x: float(self.density(x))
        mass = np.array(
            [integrate.quad(f, lo, hi, epsabs=1e-14, epsrel=1e-12, limit=200)[0] for lo, hi in zip(edges[:-1], edges[1:])]
        )
        if np.any(mass < 0):
            raise ValueError("custom density must be non-negative")
        total = mass.sum()
        if not total > 0 or not math.isfinite(total):
            raise ValueError("custom density has no finite positive mass on its support")
        cum = np.concatenate([[0.0], np.cumsum(mass)]) / total
        # drop flat stretches so the inverse interpolant is well defined
        keep = np.concatenate([[True], np.diff(cum) > 0])
        fwd = interpolate.PchipInterpolator(edges[keep], cum[keep], extrapolate=False)
        inv = interpolate.PchipInterpolator(cum[keep], edges[keep], extrapolate=False)
        object.__setattr__(self, "_table", (total, fwd, inv))

    @property
    def norm(self) -> float:
        return self._table[0]

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.lower) & (x <= self.upper)
        vals = np.vectorize(lambda s: float(self.density(s)) if self.lower <= s <= self.upper else 0.0)(x)
        return np.where(inside, vals / self.norm, 0.0)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = self._table[1](np.clip(x, self._table[1].x[0], self._table[1].x[-1]))
        return np.clip(np.where(x <= self.lower, 0.0, np.where(x >= self.upper, 1.0, out)), 0.0, 1.0)

    def inverse_cdf(self, u):
        u = _check_unit_interval(u)
        return self._table[2](u)

    def _moment(self, k: int) -> float:
        f = lambda x: x**k * float(self.density(x)) / self.norm
        return integrate.quad(f, self.lower, self.upper, epsabs=1e-13, epsrel=1e-12, limit=400)[0]

    @property
    def mean(self):
        return self._moment(1)

    @property
    def variance(self):
        m1 = self._moment(1)
        return self._moment(2) - m1 * m1

    @property
    def support(self):
        return (self.lower, self.upper)

    def standard_inverse_cdf(self, u):
        return self.inverse_cdf(u)

    def to_dict(self):
        raise TypeError("custom marginals hold a Python callable and cannot be serialized")


def marginal_from_dict(entry: dict, uniform_convention: str = "unit") -> Marginal:
    """Build a marginal from a config/serialization mapping."""
    kind = entry.get("kind")
    if kind == "uniform":
        return Uniform(float(entry.get("a", 0.0)), float(entry.get("b", 1.0)), uniform_convention)
    if kind == "gaussian":
        return Gaussian(float(entry.get("mu", 0.0)), float(entry.get("sigma", 1.0)))
    if kind == "lognormal":
        if "mean" in entry or "cov" in entry:
            return Lognormal.from_mean_cov(float(entry["mean"]), float(entry["cov"]))
        return Lognormal(float(entry["mu_g"]), float(entry["sigma_g"]))
    raise ValueError(f"unsupported marginal kind {kind!r}")


class RandomInput:
    """Joint law of ``N`` independent variables given by their marginals."""

    def __init__(self, marginals: Sequence[Marginal], correlation=None):
        if correlation is not None:
            corr = np.asarray(correlation, dtype=float)
            if not np.allclose(corr, np.eye(len(marginals))):
                raise ValueError("correlated inputs are not supported; variables must be independent")
        marginals = tuple(marginals)
        if len(marginals) < 1:
            raise ValueError("a random input needs at least one variable")
        for m in marginals:
            if not isinstance(m, Marginal):
                raise TypeError(f"{m!r} is not a Marginal")
        self.marginals = marginals

    @classmethod
    def iid(cls, marginal: Marginal, dim: int) -> "RandomInput":
        return cls([marginal] * dim)

    @property
    def dim(self) -> int:
        return len(self.marginals)

    def __len__(self):
        return self.dim

    def __repr__(self):
        return f"RandomInput({list(self.marginals)!r})"

    def _as_points(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(f"expected points with {self.dim} coordinates, got shape {x.shape}")
        return x

    def density(self, x):
        """Joint density, the product of the marginal densities."""
        x = self._as_points(x)
        out = np.ones(x.shape[:-1])
        for i, m in enumerate(self.marginals):
            out = out * m.pdf(x[..., i])
        return out if out.ndim else float(out)

    def to_standard(self, x, kind: str | None = None):
        """Map physical points to the standard space of each marginal.

        ``kind="normal"`` additionally requires every marginal to standardize
        to the standard Gaussian.
        """
        x = self._as_points(x)
        if kind is not None:
            self.require_standard(kind)
        out = np.empty_like(x)
        for i, m in enumerate(self.marginals):
            out[..., i] = m.to_standard(x[..., i])
        return out

    def from_standard(self, z, kind: str | None = None):
        z = self._as_points(z)
        if kind is not None:
            self.require_standard(kind)
        out = np.empty_like(z)
        for i, m in enumerate(self.marginals):
            out[..., i] = m.from_standard(z[..., i])
        return out

    def require_standard(self, kind: str):
        bad = [i + 1 for i, m in enumerate(self.marginals) if m.standard != kind]
        if bad:
            raise StandardizationError(f"variables {bad} cannot be standardized to the {kind!r} measure")

    def standard_mean(self) -> np.ndarray:
        """Mean of the standardized variables."""
        out = np.empty(self.dim)
        for i, m in enumerate(self.marginals):
            if m.standard in ("normal", "uniform11"):
                out[i] = 0.0
            elif m.standard == "uniform01":
                out[i] = 0.5
            else:
                out[i] = m.mean
        return out

    def mean(self) -> np.ndarray:
        return np.array([m.mean for m in self.marginals])

    def sample_standard(self, n: int, rng: np.random.Generator) -> np.ndarray:
        u = rng.random((n, self.dim))
        # rng.random may return exactly 0
        u = np.where(u > 0.0, u, np.nextafter(0.0, 1.0))
        return self.standard_inverse_cdf(u)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.from_standard(self.sample_standard(n, rng))

    def standard_inverse_cdf(self, u) -> np.ndarray:
        u = self._as_points(u)
        out = np.empty_like(u)
        for i, m in enumerate(self.marginals):
            out[..., i] = m.standard_inverse_cdf(u[..., i])
        return out

    def to_list(self) -> list[dict]:
        return [m.to_dict() for m in self.marginals]

    @classmethod
    def from_list(cls, specs: Sequence[dict], uniform_convention: str = "unit") -> "RandomInput":
        return cls([marginal_from_dict(s, uniform_convention) for s in specs])
