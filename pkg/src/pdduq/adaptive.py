"""Adaptive-sparse PDD: sensitivity-driven selection of subsets and orders.

For each cardinality ``s = 1..S`` the candidate subsets are first ranked by
their approximate global sensitivity index while a common probe order
``m_v = 1, 2, ...`` grows until the ranking settles.  Then, in ranked order,
each subset's order ``m_u`` grows from 1 until the relative increment of its
sensitivity index drops to ``eps2``; the subset is kept (with all shells up
to that order) if its index exceeds ``eps1``, otherwise the sweep over this
cardinality ends.  Sensitivity indices are ratios against the running
variance ``sigma_V^2``: the sum of squares of all coefficients selected so
far plus those of the subset(s) being probed.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .store import CoefficientStore, SurrogateModel, UndefinedSensitivityError, count_adaptive, count_truncated

__all__ = [
    "AdaptiveConfig",
    "SensitivityRecord",
    "RankingTable",
    "AdaptiveState",
    "AdaptiveResult",
    "RankingError",
    "sensitivity_index",
    "sensitivity_increment",
    "rank_components",
    "run_adaptive",
    "build_truncated",
]


# coefficients below this fraction of the output's root mean square are roundoff
NOISE_RTOL = 1e-12


class RankingError(RuntimeError):
    """The ranking did not settle before the highest available order."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass
class AdaptiveConfig:
    """Tolerances and limits of an adaptive run.

    Attributes
    ----------
    S : int, optional
        Largest subset cardinality (``None`` means ``N``: fully adaptive).
    eps1 : float
        Sensitivity threshold for keeping a subset.
    eps2 : float
        Threshold on the relative increment that stops order growth.
    eps3 : float
        Ranking convergence tolerance in ``[0, 1]``.
    ranking : {"full", "reduced"}
    ranking_criterion : {"unchanged", "discrepancy"}
        ``"unchanged"``: converged when the fraction of ranked positions that
        kept their subset is at least ``eps3``.  ``"discrepancy"``: converged
        when the fraction of changed positions (relative to the previous
        list length) is at most ``eps3``.
    max_order : int
        Hard cap on polynomial orders.
    """

    S: int | None = None
    eps1: float = 1e-6
    eps2: float = 1e-6
    eps3: float = 0.7
    ranking: str = "full"
    ranking_criterion: str = "unchanged"
    max_order: int = 16

    def validate(self, N: int):
        S = N if self.S is None else self.S
        if not 1 <= S <= N:
            raise ValueError(f"S must satisfy 1 <= S <= N={N}, got {S}")
        if self.eps1 < 0 or self.eps2 < 0:
            raise ValueError("tolerances eps1 and eps2 must be non-negative")
        if not 0 <= self.eps3 <= 1:
            raise ValueError("eps3 must lie in [0, 1]")
        if self.ranking not in ("full", "reduced"):
            raise ValueError(f"unknown ranking scheme {self.ranking!r}")
        if self.ranking_criterion not in ("unchanged", "discrepancy"):
            raise ValueError(f"unknown ranking criterion {self.ranking_criterion!r}")
        if self.max_order < 1:
            raise ValueError("max_order must be at least 1")
        return S


@dataclass
class SensitivityRecord:
    u: tuple
    m: int
    G: float
    dG: float | None
    retained: bool = False


@dataclass
class RankingTable:
    """Ranking of one cardinality's candidate subsets."""

    cardinality: int
    order: list
    G: dict
    m: int
    history: list = field(default_factory=list)

    @property
    def L(self) -> int:
        return len(self.order)


def sensitivity_increment(G_new: float, G_old: float) -> float:
    """Relative change ``(G_new - G_old) / G_old``; 0/0 gives 0 and x/0 gives +inf."""
    if G_old == 0.0:
        return 0.0 if G_new == 0.0 else math.inf
    return (G_new - G_old) / G_old


def sensitivity_index(shell_variance: float, running_variance: float) -> float:
    """``G = S_u(m) / sigma_V^2``; raises on a zero running variance."""
    if running_variance == 0.0:
        raise UndefinedSensitivityError("sensitivity index undefined: running variance is zero")
    return shell_variance / running_variance


def _safe_index(shell, running):
    try:
        return sensitivity_index(shell, running)
    except UndefinedSensitivityError:
        return 0.0


class AdaptiveState:
    """Mutable state of one adaptive campaign for one model output."""

    def __init__(self, engine, config: AdaptiveConfig, output: int = 0):
        self.engine = engine
        self.config = config
        self.output = output
        self.N = engine.dim
        self.S = config.validate(self.N)
        self.store = CoefficientStore(self.N)
        self.orders: dict[tuple, int] = {}
        self.records: dict[tuple, SensitivityRecord] = {}
        self.rankings: dict[int, RankingTable] = {}
        self.running_variance = 0.0
        self.audit: list[dict] = []
        self.conditions: list[str] = []
        self.probed_max_order = 0
        self._mean_sq = None

    # coefficient access ------------------------------------------------------
    def order_limit(self, u) -> int:
        lim = self.config.max_order
        for i in u:
            lim = min(lim, self.engine.bases[i].max_order)
        n_points = getattr(self.engine, "n_points", None)
        if n_points is not None:
            lim = min(lim, n_points)
        level = getattr(self.engine, "level", None)
        if level is not None:
            lim = min(lim, 2 * level + 1)
        return lim

    def coefficients(self, u, m):
        self.probed_max_order = max(self.probed_max_order, m)
        return self.engine.coefficients(u, m, self.output)

    def noise_floor(self) -> float:
        """Shell variances at or below this level are quadrature roundoff."""
        if self._mean_sq is None:
            self._mean_sq = self.engine.mean(self.output) ** 2
        return NOISE_RTOL**2 * (self._mean_sq + self.running_variance)

    def shell_variance(self, u, m) -> float:
        c = self.coefficients(u, m)
        v = float(np.sum(c * c))
        return 0.0 if v <= self.noise_floor() else v

    def log(self, event: str, **data):
        entry = {"event": event}
        entry.update({k: (list(v) if isinstance(v, tuple) else v) for k, v in data.items()})
        self.audit.append(entry)

    def rederived_variance(self) -> float:
        return self.store.variance()

    def retain(self, u, m):
        c = self.coefficients(u, m)
        self.store.set_subset(u, c)
        self.orders[u] = m
        self.running_variance += float(np.sum(c * c))


def _candidates(state: AdaptiveState, s: int) -> list[tuple]:
    if s == 1 or state.config.ranking == "full":
        return list(itertools.combinations(range(state.N), s))
    used = sorted({i for u in state.orders for i in u})
    return list(itertools.combinations(used, s))


def _rank(G: dict, subsets) -> list:
    return sorted(subsets, key=lambda v: (-G[v], v))


def rank_components(state: AdaptiveState, s: int, candidates=None) -> RankingTable:
    """Rank the cardinality-``s`` candidates by iterating the probe order.

    Raises
    ------
    RankingError
        If the highest available order is reached before convergence.
    """
    cfg = state.config
    cand = list(candidates) if candidates is not None else _candidates(state, s)
    if not cand:
        return RankingTable(s, [], {}, 0)
    limit = min(state.order_limit(v) for v in cand)
    history = []
    current = cand
    prev_order = None
    m = 0
    while True:
        m += 1
        if m > limit:
            raise RankingError(
                f"ranking of {s}-variate subsets not converged by order {limit}",
                {"cardinality": s, "history": history},
            )
        shells = {v: state.shell_variance(v, m) for v in current}
        running = state.running_variance + math.fsum(shells.values())
        G = {v: _safe_index(shells[v], running) for v in current}
        order = _rank(G, current)
        if cfg.ranking == "reduced":
            L = 0
            while L < len(order) and G[order[L]] > cfg.eps1:
                L += 1
            order = order[:L]
        entry = {"m": m, "L": len(order), "order": [list(v) for v in order], "G": [G[v] for v in order]}
        converged = False
        if prev_order is not None:
            L = len(order)
            unchanged = sum(1 for i in range(L) if i < len(prev_order) and prev_order[i] == order[i])
            entry["unchanged"] = unchanged
            if L == 0:
                converged = True
            elif cfg.ranking_criterion == "unchanged":
                converged = unchanged / L >= cfg.eps3
            else:
                changed = len(prev_order) - sum(
                    1 for i in range(len(prev_order)) if i < L and prev_order[i] == order[i]
                )
                converged = changed / max(len(prev_order), 1) <= cfg.eps3
            entry["converged"] = converged
        elif len(cand) <= 1 or not order:
            converged = True
            entry["converged"] = True
        history.append(entry)
        state.log("rank", cardinality=s, m=m, L=len(order), unchanged=entry.get("unchanged"), converged=converged)
        if converged:
            table = RankingTable(s, order, G, m, history)
            state.rankings[s] = table
            return table
        prev_order = order
        current = order


def _grow(state: AdaptiveState, u, pending: dict) -> tuple[int, float, list]:
    """Grow the order of ``u`` from 1 until the relative increment reaches ``eps2``.

    ``pending`` maps every subset of the current cardinality still counted
    in the running variance to its current order; it is updated in place.
    The order that triggers the stop adds no significant mass and is not
    kept.  Returns ``(m_u, G_{u,m_u}, trace)`` for the kept order ``m_u``.
    """
    cfg = state.config
    limit = state.order_limit(u)

    def index_at(m):
        pending[u] = m
        running = state.running_variance + math.fsum(state.shell_variance(v, mv) for v, mv in pending.items())
        return _safe_index(state.shell_variance(u, m), running)

    m = 1
    G_prev = index_at(m)
    trace = [{"m": m, "G": G_prev, "dG": None}]
    state.log("probe", u=u, m=m, G=G_prev, dG=None)
    state.records[u] = SensitivityRecord(u, m, G_prev, None)
    while True:
        if m >= limit:
            msg = f"order cap {limit} reached while growing subset {[i + 1 for i in u]}"
            state.conditions.append(msg)
            state.log("stop", u=u, m=m, reason="order_cap")
            return m, G_prev, trace
        G = index_at(m + 1)
        dG = sensitivity_increment(G, G_prev)
        trace.append({"m": m + 1, "G": G, "dG": dG})
        state.log("probe", u=u, m=m + 1, G=G, dG=dG)
        if dG <= cfg.eps2:
            state.log("stop", u=u, m=m + 1, reason="increment")
            pending[u] = m
            return m, G_prev, trace
        m += 1
        state.records[u] = SensitivityRecord(u, m, G, dG)
        G_prev = G


def _run_cardinality(state: AdaptiveState, s: int):
    cfg = state.config
    table = rank_components(state, s)
    pending = {v: table.m for v in table.order}
    for u in table.order:
        m, G, trace = _grow(state, u, pending)
        del pending[u]
        if G <= cfg.eps1:
            state.log("reject", u=u, m=m, G=G)
            state.log("exit", cardinality=s, u=u)
            return
        state.retain(u, m)
        state.records[u].retained = True
        state.log("retain", u=u, m=m, G=G)


@dataclass
class AdaptiveResult:
    surrogate: SurrogateModel
    state: AdaptiveState
    report: dict


def _report(state: AdaptiveState) -> dict:
    store = state.store
    N, S = state.N, state.S
    m_max = max(state.orders.values(), default=0)
    var = store.variance()
    retained = []
    for u in sorted(state.orders, key=lambda v: (len(v), v)):
        rec = state.records[u]
        retained.append(
            {
                "u": [i + 1 for i in u],
                "m": state.orders[u],
                "G": rec.G,
                "dG": rec.dG,
                "variance": store.component_variance(u),
                "index": store.component_variance(u) / var if var > 0 else None,
            }
        )
    return {
        "output": state.output,
        "N": N,
        "S": S,
        "config": asdict(state.config),
        "mean": store.y_empty,
        "variance": var,
        "running_variance": state.running_variance,
        "coefficient_count": count_adaptive(store),
        "truncated_count_at_m_max": count_truncated(N, S, m_max) if m_max else 1,
        "m_max_retained": m_max,
        "m_max_probed": state.probed_max_order,
        "eval_count": state.engine.eval_count,
        "retained": retained,
        "rankings": {
            str(s): {"m": t.m, "L": t.L, "order": [[i + 1 for i in v] for v in t.order]} for s, t in state.rankings.items()
        },
        "conditions": list(state.conditions),
    }


def run_adaptive(engine, config: AdaptiveConfig | None = None, output: int = 0, random_input=None) -> AdaptiveResult:
    """Build an adaptive-sparse PDD surrogate for one output of the engine's model.

    Parameters
    ----------
    engine : coefficient engine
        :class:`~pdduq.quadrature.FullGridEngine`,
        :class:`~pdduq.quadrature.FsiEngine` or
        :class:`~pdduq.qmc.SamplingEngine`.
    config : AdaptiveConfig
    output : int
        Model output to approximate.
    """
    config = config or AdaptiveConfig()
    state = AdaptiveState(engine, config, output)
    for s in range(1, state.S + 1):
        _run_cardinality(state, s)
    state.store.y_empty = engine.mean(output)
    state.store.add_evals(engine.eval_count)
    rederived = state.rederived_variance()
    if not math.isclose(rederived, state.running_variance, rel_tol=1e-12, abs_tol=1e-300):
        raise AssertionError("running variance drifted from the stored coefficients")
    surrogate = SurrogateModel(state.store, engine.bases, random_input or getattr(engine, "input", None))
    return AdaptiveResult(surrogate, state, _report(state))


def build_truncated(engine, S: int, m: int, output: int = 0, random_input=None) -> SurrogateModel:
    """Classical truncated PDD: every subset with ``|u| <= S`` at order ``m``."""
    N = engine.dim
    store = CoefficientStore(N, engine.mean(output))
    for s in range(1, S + 1):
        for u in itertools.combinations(range(N), s):
            store.set_subset(u, engine.coefficients(u, m, output))
    store.add_evals(engine.eval_count)
    return SurrogateModel(store, engine.bases, random_input or getattr(engine, "input", None))


def audit_lines(state: AdaptiveState) -> list[str]:
    """The audit log as one JSON object per line."""
    return [json.dumps(e, default=float) for e in state.audit]
