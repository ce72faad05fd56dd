"""Sobol low-discrepancy sequences and sampling-based coefficient estimation.

The generator uses Gray-code ordering with 32-bit direction numbers read
from ``data/sobol_directions.txt`` (rows ``d s a m_1 ... m_s``).  The
all-zero first point of the sequence is dropped, so the first point in one
dimension is 0.5 and every point lies in the open unit cube.
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources

import numpy as np

from .evaluation import ModelEvaluator
from .orthopoly import build_basis
from .random_input import RandomInput
from .store import CoefficientStore

__all__ = ["SobolSequence", "SamplingEngine", "estimate_coeffs_qmc", "load_direction_numbers", "BITS"]

BITS = 32


@lru_cache(maxsize=1)
def load_direction_numbers() -> tuple:
    """Parse the bundled table; entry ``k`` describes dimension ``k + 2``."""
    rows = []
    text = resources.files("pdduq").joinpath("data/sobol_directions.txt").read_text()
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        d, s, a, *m = (int(t) for t in line.split())
        if len(m) != s:
            raise ValueError(f"direction row for dimension {d} lists {len(m)} values, expected {s}")
        rows.append((s, a, tuple(m)))
    return tuple(rows)


def _direction_vectors(dim: int) -> np.ndarray:
    table = load_direction_numbers()
    if dim > len(table) + 1:
        raise ValueError(f"dimension {dim} exceeds the direction table ({len(table) + 1} dimensions)")
    v = np.zeros((dim, BITS), dtype=np.uint64)
    v[0] = [1 << (BITS - 1 - i) for i in range(BITS)]
    for k in range(1, dim):
        s, a, m = table[k - 1]
        vk = [0] * BITS
        for i in range(min(s, BITS)):
            vk[i] = m[i] << (BITS - 1 - i)
        for i in range(s, BITS):
            x = vk[i - s] ^ (vk[i - s] >> s)
            for t in range(1, s):
                if (a >> (s - 1 - t)) & 1:
                    x ^= vk[i - t]
            vk[i] = x
        v[k] = vk
    return v


class SobolSequence:
    """Stateful Sobol point generator.

    Parameters
    ----------
    dim : int
        Number of coordinates.
    skip : int
        Number of leading points (after the dropped origin) to discard.
    scramble : bool
        Apply a random digital shift drawn from ``seed``; shifted points are
        centred in their dyadic cells so they stay inside ``(0, 1)``.
    seed : int, optional
    """

    def __init__(self, dim: int, skip: int = 0, scramble: bool = False, seed: int | None = None):
        if dim < 1:
            raise ValueError("dimension must be positive")
        self.dim = int(dim)
        self.skip = int(skip)
        self.scramble = bool(scramble)
        self.seed = seed
        self._v = _direction_vectors(self.dim)
        if self.scramble:
            rng = np.random.Generator(np.random.Philox(seed))
            self._shift = rng.integers(0, 1 << BITS, size=self.dim, dtype=np.uint64)
        else:
            self._shift = np.zeros(self.dim, dtype=np.uint64)
        self.index = 1 + self.skip

    def reset(self):
        self.index = 1 + self.skip

    def _integers(self, start: int, n: int) -> np.ndarray:
        k = np.arange(start, start + n, dtype=np.uint64)
        gray = k ^ (k >> np.uint64(1))
        out = np.zeros((n, self.dim), dtype=np.uint64)
        for b in range(BITS):
            bit = ((gray >> np.uint64(b)) & np.uint64(1)).astype(bool)
            if not bit.any():
                continue
            out[bit] ^= self._v[:, b]
        return out ^ self._shift

    def next_block(self, n: int) -> np.ndarray:
        """The next ``n`` points, shape ``(n, dim)``."""
        if self.index + n > (1 << BITS):
            raise ValueError("sequence exhausted")
        ints = self._integers(self.index, n)
        self.index += n
        x = ints.astype(np.float64)
        if self.scramble:
            x += 0.5
        return x / float(1 << BITS)

    def next_point(self) -> np.ndarray:
        return self.next_block(1)[0]


class SamplingEngine:
    """Coefficient estimates from one shared sample of size ``L``.

    ``sampler="sobol"`` uses the Sobol sequence (quasi Monte Carlo);
    ``sampler="random"`` draws pseudo-random uniforms from a Philox
    generator seeded with ``seed``.  Every coefficient and the mean are
    sample averages over the same ``L`` model evaluations.
    """

    def __init__(self, model, random_input: RandomInput, L: int, sampler: str = "sobol", skip: int = 0,
                 scramble: bool = False, seed: int | None = None, bases=None, max_order: int = 16,
                 evaluator: ModelEvaluator | None = None, budget=None, threads: int = 1):
        if L < 1:
            raise ValueError("sample size L must be positive")
        self.input = random_input
        self.L = int(L)
        self.bases = list(bases) if bases is not None else [build_basis(m, max_order) for m in random_input.marginals]
        if sampler == "sobol":
            u = SobolSequence(random_input.dim, skip=skip, scramble=scramble, seed=seed).next_block(self.L)
        elif sampler == "random":
            rng = np.random.Generator(np.random.Philox(seed))
            u = rng.random((self.L, random_input.dim))
            u = np.where(u > 0.0, u, np.nextafter(0.0, 1.0))
        else:
            raise ValueError(f"unknown sampler {sampler!r}")
        self.points = random_input.standard_inverse_cdf(u)
        self.evaluator = evaluator or ModelEvaluator(model, random_input, budget=budget, threads=threads, use_cache=False)
        self._y = None
        self._coeffs: dict[tuple, np.ndarray] = {}

    @property
    def dim(self) -> int:
        return self.input.dim

    @property
    def eval_count(self) -> int:
        return self.evaluator.eval_count

    def values(self) -> np.ndarray:
        if self._y is None:
            self._y = self.evaluator.evaluate_standard(self.points)
        return self._y

    @property
    def n_outputs(self) -> int:
        return self.values().shape[1]

    def check_order(self, u, m):
        pass

    def mean(self, output: int = 0) -> float:
        return float(np.mean(self.values()[:, output]))

    def coefficients(self, u, m: int, output: int = 0) -> np.ndarray:
        u = tuple(sorted(u))
        key = (u, output)
        cached = self._coeffs.get(key)
        if cached is not None and cached.shape[0] >= m:
            return cached[(slice(0, m),) * len(u)].copy()
        y = self.values()[:, output] / self.L
        tables = [self.bases[i].eval_all(self.points[:, i], m)[1:] for i in u]
        letters = "abcdefghijklmnopqrstuvwxyz"
        subscripts = ",".join(f"{letters[k]}z" for k in range(len(u))) + ",z->" + letters[: len(u)]
        out = np.einsum(subscripts, *tables, y, optimize=True)
        self._coeffs[key] = out
        return out.copy()

    def estimate(self, targets, output: int = 0) -> CoefficientStore:
        store = CoefficientStore(self.dim, self.mean(output))
        for u, j in targets:
            order = sorted(range(len(u)), key=lambda k: u[k])
            uu = tuple(u[k] for k in order)
            jj = tuple(j[k] for k in order)
            c = self.coefficients(uu, max(jj), output)
            store.set(uu, jj, c[tuple(k - 1 for k in jj)], replace=True)
        store.add_evals(self.eval_count)
        return store


def estimate_coeffs_qmc(model, random_input, targets, L, skip=0, scramble=False, seed=None, output=0, **kw):
    """Quasi Monte Carlo estimates of ``y_empty`` and the target coefficients."""
    engine = SamplingEngine(model, random_input, L, sampler="sobol", skip=skip, scramble=scramble, seed=seed, **kw)
    return engine.estimate(targets, output)
