"""Nested fully symmetric interpolatory (FSI) sparse grids for the Gaussian measure.

A level-``n`` rule in ``d`` dimensions places points at every sign and
coordinate permutation of ``(alpha_{p_1}, ..., alpha_{p_d})`` for partitions
``n >= p_1 >= ... >= p_d >= 0`` with ``p_1 + ... + p_d <= n``.  The generators
``alpha_i`` come from successive Kronrod-type extensions of the one-point
rule at the origin, which makes the rules nested.  The partition weight is

.. math::

    w_p = 2^{-K} \\sum_{|k| \\le n - |p|} \\prod_{i=1}^{d}
          \\frac{a_{k_i + p_i}}{\\prod_{j=0, j \\ne p_i}^{k_i + p_i} (\\alpha_{p_i}^2 - \\alpha_j^2)},
    \\qquad a_i = E\\Big[\\prod_{j<i} (\\xi^2 - \\alpha_j^2)\\Big],

with ``K`` the number of nonzero entries of ``p`` and ``xi`` standard normal.
Many ``a_i`` vanish by construction; partitions all of whose terms carry such
a factor get weight zero and are dropped from the grid.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache

import mpmath as mp
import numpy as np

__all__ = [
    "GENERATORS",
    "MAX_LEVEL",
    "derive_generators",
    "a_constants",
    "partitions",
    "fsi_weight",
    "fsi_rule",
    "fsi_point_count",
    "FsiLevelError",
]

_DPS = 60

# Generators from ``derive_generators()``; the derivation is re-run by the
# test suite and the rules are validated by their exactness degree.
_GENERATOR_DIGITS = (
    "0.0",
    "1.732050807568877293527446341505872366943",
    "4.184956017672731860688907895322001958693",
    "0.7410953499945408418617965611069559251809",
    "2.861279576057058117331474486594367897112",
    "6.363394494336369987632578605063407812441",
    "1.23042363402730600775114365003367671712",
    "5.187016039913656065991776521815726089911",
    "2.596083115049202159357846029553135674019",
    "3.205333794499194518718378176305636978419",
    "9.016939789890302517459803721310536935721",
    "0.2489922975799606118065578039516260454115",
    "7.980771798590560880180006476785043329122",
    "2.233626061676941652009594313381299170061",
    "7.122106700804616658218976915658152963426",
    "3.635318519037278245218972028619774716565",
    "5.698177768488109589329649602133024650762",
    "4.736433085952297084098720196871524038828",
)

GENERATORS = np.array([float(g) for g in _GENERATOR_DIGITS])
MAX_LEVEL = len(_GENERATOR_DIGITS) - 1

# indices i with a_i = 0 exactly
STRUCTURAL_ZEROS = frozenset({2, 5, 6, 7, 10, 11, 12, 13, 14})


class FsiLevelError(ValueError):
    """Raised for a level outside the range covered by the generator table."""


def _check_level(level: int):
    if not 0 <= level <= MAX_LEVEL:
        raise FsiLevelError(f"FSI level must lie in 0..{MAX_LEVEL}, got {level}")


def _gauss_moment(k: int):
    """``E[xi^k]`` for standard normal ``xi`` as an exact mpmath number."""
    if k % 2:
        return mp.mpf(0)
    return mp.fac2(k - 1) if k > 0 else mp.mpf(1)


def _polymul(a, b):
    out = [mp.mpf(0)] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            out[i + j] += x * y
    return out


def _expect_in_square(p):
    """``E[p(xi^2)]`` for a polynomial given by coefficients in ``s = xi^2``."""
    return mp.fsum(c * _gauss_moment(2 * k) for k, c in enumerate(p))


def _node_polynomial(gens):
    poly = [mp.mpf(1)]
    for g in gens:
        poly = _polymul(poly, [-g * g, mp.mpf(1)])
    return poly


def _extend(gens, gamma):
    """New squared generators: roots of the degree-``gamma`` polynomial ``q`` with
    ``E[s^b P(s) q(s)] = 0`` for ``b < gamma``, where ``P`` is the current node polynomial."""
    base = _node_polynomial(gens)
    A = mp.matrix(gamma, gamma)
    rhs = mp.matrix(gamma, 1)
    for b in range(gamma):
        pb = [mp.mpf(0)] * b + base
        for k in range(gamma):
            A[b, k] = _expect_in_square([mp.mpf(0)] * k + pb)
        rhs[b] = -_expect_in_square([mp.mpf(0)] * gamma + pb)
    try:
        t = mp.lu_solve(A, rhs)
    except ZeroDivisionError:
        return None
    q = [t[k] for k in range(gamma)] + [mp.mpf(1)]
    try:
        roots = mp.polyroots(q[::-1], maxsteps=500, extraprec=300)
    except mp.NoConvergence:
        return None
    out = []
    for r in roots:
        if abs(mp.im(r)) > mp.mpf(10) ** -30 or mp.re(r) <= 0:
            return None
        out.append(mp.sqrt(mp.re(r)))
    out = sorted(out)
    # a root near infinity means the monic extension polynomial does not
    # exist at this degree (its leading coefficient vanishes)
    if out[-1] > 1e3:
        return None
    if any(min(abs(n - g) for g in gens) < mp.mpf(10) ** -20 for n in out):
        return None
    return out


def _alternate(values):
    """Order new generators largest, smallest, next largest, next smallest, ..."""
    rest = sorted(values)
    out, high = [], True
    while rest:
        out.append(rest.pop(-1) if high else rest.pop(0))
        high = not high
    return out


def derive_generators(extensions: int = 4, dps: int = _DPS, max_gamma: int = 13):
    """Construct the generator sequence by repeated nested extension.

    Starting from the single node at the origin, each extension adds the
    fewest (``gamma``) positive node pairs whose polynomial is orthogonal to
    low powers against the old node polynomial, subject to raising the
    degree of exactness and to all new nodes being real and distinct.

    Returns
    -------
    gens : list of mpmath numbers
    steps : list of int
        ``gamma`` of each extension.
    """
    with mp.workdps(dps):
        gens = [mp.mpf(0)]
        degree = 1
        steps = []
        for _ in range(extensions):
            n_old = 2 * len(gens) - 1
            for gamma in range(1, max_gamma + 1):
                if n_old + 4 * gamma <= degree:
                    continue
                new = _extend(gens, gamma)
                if new:
                    degree = n_old + 4 * gamma
                    gens += _alternate(new)
                    steps.append(gamma)
                    break
            else:
                raise RuntimeError("no admissible extension found")
        return gens, steps


@lru_cache(maxsize=1)
def _mp_tables():
    with mp.workdps(_DPS):
        gens = [mp.mpf(g) for g in _GENERATOR_DIGITS]
        a = []
        for i in range(len(gens)):
            a.append(mp.mpf(0) if i in STRUCTURAL_ZEROS else _expect_in_square(_node_polynomial(gens[:i])))
        sq = [g * g for g in gens]
    return gens, a, sq


def a_constants() -> np.ndarray:
    """The constants ``a_i`` as floats (``a_0 = 1``)."""
    return np.array([float(v) for v in _mp_tables()[1]])


def partitions(level: int, dim: int, largest: int | None = None):
    """Non-increasing ``dim``-tuples of non-negative integers with sum at most ``level``."""
    if largest is None:
        largest = level
    if dim == 0:
        yield ()
        return
    for first in range(min(level, largest), -1, -1):
        for rest in partitions(level - first, dim - 1, first):
            yield (first,) + rest


def _compositions_bounded(total: int, dim: int):
    """All ``dim``-tuples of non-negative integers with sum at most ``total``."""
    if dim == 0:
        yield ()
        return
    for first in range(total + 1):
        for rest in _compositions_bounded(total - first, dim - 1):
            yield (first,) + rest


@lru_cache(maxsize=None)
def _weight_mp(p: tuple, level: int):
    gens, a, sq = _mp_tables()
    with mp.workdps(_DPS):
        # per-coordinate factors depend only on (p_i, k_i)
        factor = {}
        for pi in set(p):
            for ki in range(level - sum(p) + 1):
                idx = ki + pi
                if idx in STRUCTURAL_ZEROS:
                    factor[pi, ki] = None
                    continue
                den = mp.mpf(1)
                for j in range(idx + 1):
                    if j != pi:
                        den *= sq[pi] - sq[j]
                factor[pi, ki] = a[idx] / den
        total = mp.mpf(0)
        nonzero = False
        for k in _compositions_bounded(level - sum(p), len(p)):
            term = mp.mpf(1)
            for pi, ki in zip(p, k):
                f = factor[pi, ki]
                if f is None:
                    term = None
                    break
                term *= f
            if term is not None:
                nonzero = True
                total += term
        K = sum(1 for x in p if x)
        return total / 2**K, nonzero


def fsi_weight(p, level: int, dim: int | None = None) -> float:
    """Weight of every point generated by partition ``p`` at ``level``.

    ``p`` may be given unsorted and without trailing zeros when ``dim`` is
    supplied.  Structurally vanishing weights are returned as exactly 0.
    """
    _check_level(level)
    p = tuple(sorted((int(x) for x in p), reverse=True))
    if dim is not None:
        if len(p) > dim:
            raise ValueError("partition longer than the dimension")
        p = p + (0,) * (dim - len(p))
    if any(x < 0 for x in p) or sum(p) > level:
        raise ValueError(f"{p} is not a partition admissible at level {level}")
    w, nonzero = _weight_mp(p, level)
    return float(w) if nonzero else 0.0


def _distinct_permutations(p):
    """Distinct orderings of a multiset, in lexicographic order of positions."""
    counts = {}
    for x in p:
        counts[x] = counts.get(x, 0) + 1
    keys = sorted(counts, reverse=True)
    n = len(p)

    def rec(prefix):
        if len(prefix) == n:
            yield tuple(prefix)
            return
        for key in keys:
            if counts[key]:
                counts[key] -= 1
                prefix.append(key)
                yield from rec(prefix)
                prefix.pop()
                counts[key] += 1

    yield from rec([])


def _partition_size(p) -> int:
    perms = math.factorial(len(p))
    for x in set(p):
        perms //= math.factorial(p.count(x))
    return perms * 2 ** sum(1 for x in p if x)


def fsi_point_count(dim: int, level: int) -> int:
    """Number of points with nonzero weight in the ``dim``-dimensional rule."""
    _check_level(level)
    if dim < 1:
        raise ValueError("dimension must be positive")
    return sum(_partition_size(p) for p in partitions(level, dim) if _weight_mp(p, level)[1])


@lru_cache(maxsize=64)
def _rule_cached(dim: int, level: int):
    pts, wts = [], []
    for p in partitions(level, dim):
        w, nonzero = _weight_mp(p, level)
        if not nonzero:
            continue
        w = float(w)
        for perm in _distinct_permutations(p):
            base = GENERATORS[list(perm)]
            nz = [i for i, x in enumerate(perm) if x]
            for signs in itertools.product((1.0, -1.0), repeat=len(nz)):
                x = base.copy()
                x[nz] *= signs
                pts.append(x)
                wts.append(w)
    points = np.array(pts).reshape(len(pts), dim)
    weights = np.array(wts)
    points.setflags(write=False)
    weights.setflags(write=False)
    return points, weights


def fsi_rule(dim: int, level: int):
    """Nodes (standard-normal space) and weights of the ``dim``-dimensional rule.

    Returns
    -------
    points : ndarray, shape (n, dim)
    weights : ndarray, shape (n,)
        Weights sum to one; some may be negative.
    """
    _check_level(level)
    if dim < 1:
        raise ValueError("dimension must be positive")
    return _rule_cached(int(dim), int(level))
