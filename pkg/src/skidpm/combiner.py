"""Selecting the consistency parameter online with an experts algorithm.

Each idle period every candidate policy (expert) is evaluated virtually.
Hedge keeps log-weights, so long runs never underflow, and the policy for
the next period is drawn from the normalised weights.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from .skirental import RHO_MAX, inverse_mu, mu_of_rho, rho_tilde

COST_SLACK = 1e-9


@dataclass(frozen=True)
class RhoGrid:
    rhos: tuple[float, ...]
    eps2: float

    @property
    def mus(self) -> tuple[float, ...]:
        return tuple(mu_of_rho(r) for r in self.rhos)


def build_rho_grid(eps2: float) -> RhoGrid:
    """{1, rho~, e/(e-1)} plus the rho_i in [1, rho~] with mu(rho_i) = (1 + i eps2) mu(rho~)."""
    if eps2 <= 0:
        raise ValueError("eps2 must be positive")
    rt = rho_tilde()
    base = mu_of_rho(rt)
    rhos = {1.0, rt, RHO_MAX}
    i = 1
    while (1 + i * eps2) * base < 1.0:
        rhos.add(inverse_mu((1 + i * eps2) * base))
        i += 1
    return RhoGrid(tuple(sorted(rhos)), eps2)


class CostBoundError(ValueError):
    """A per-period cost fed to the combiner exceeds its declared bound."""


@dataclass(frozen=True)
class CombinerState:
    log_weights: np.ndarray
    eps1: float
    cost_bound: float
    cumulative: np.ndarray
    current: int = 0
    switch_count: int = 0
    periods: int = 0

    @property
    def rate(self) -> float:
        return self.eps1 / self.cost_bound

    @property
    def probabilities(self) -> np.ndarray:
        return np.exp(self.log_weights - logsumexp(self.log_weights))

    @property
    def n_experts(self) -> int:
        return len(self.log_weights)


def combiner_init(n_experts: int, eps1: float, cost_bound: float) -> CombinerState:
    if n_experts < 1:
        raise ValueError("need at least one expert")
    if eps1 <= 0 or cost_bound <= 0:
        raise ValueError("eps1 and cost_bound must be positive")
    return CombinerState(np.zeros(n_experts), float(eps1), float(cost_bound), np.zeros(n_experts))


def _check_costs(state: CombinerState, costs) -> np.ndarray:
    costs = np.asarray(costs, dtype=float)
    if costs.shape != (state.n_experts,):
        raise ValueError("need one cost per expert")
    if np.any(costs < -COST_SLACK) or np.any(costs > state.cost_bound + COST_SLACK):
        raise CostBoundError(f"costs must lie in [0, {state.cost_bound}]")
    return costs


def pick(probabilities: np.ndarray, u: float) -> int:
    """Index i with cum[i-1] < u <= cum[i] (u = 0 picks the first expert with weight)."""
    cum = np.cumsum(probabilities)
    return int(min(np.searchsorted(cum, u * cum[-1], side="left"), len(cum) - 1))


def _advance(state: CombinerState, log_w: np.ndarray, costs: np.ndarray, u: float):
    nxt = pick(np.exp(log_w - logsumexp(log_w)), u)
    new = replace(state, log_weights=log_w - log_w.max(), cumulative=state.cumulative + costs,
                  current=nxt, switch_count=state.switch_count + (nxt != state.current),
                  periods=state.periods + 1)
    return new, nxt, u


def combiner_step(state: CombinerState, costs, u: float):
    """Hedge update with the period's per-expert costs, then draw the next expert with ``u``."""
    costs = _check_costs(state, costs)
    return _advance(state, state.log_weights - state.rate * costs, costs, u)


def fixed_share_step(state: CombinerState, costs, share_rate: float, u: float):
    """Hedge update followed by redistributing a ``share_rate`` fraction of the weight uniformly."""
    if not 0.0 <= share_rate <= 1.0:
        raise ValueError("share_rate must lie in [0, 1]")
    costs = _check_costs(state, costs)
    log_w = state.log_weights - state.rate * costs
    log_w = log_w - logsumexp(log_w)
    if share_rate > 0:
        n = state.n_experts
        with np.errstate(divide="ignore"):
            log_w = np.logaddexp(np.log1p(-share_rate) + log_w, math.log(share_rate / n))
    return _advance(state, log_w, costs, u)


def hedge_choices(costs: np.ndarray, rate: float, us: np.ndarray,
                  share_rate: float = 0.0) -> np.ndarray:
    """Expert chosen in each period for a whole (periods, experts) cost matrix.

    Period i uses weights built from the costs of periods before i. Without
    sharing the weights are a softmax of cumulative costs, computed for all
    periods at once.
    """
    costs = np.asarray(costs, dtype=float)
    n, m = costs.shape
    if share_rate == 0.0:
        prior = np.vstack([np.zeros((1, m)), np.cumsum(costs, axis=0)[:-1]])
        log_w = -rate * prior
        probs = np.exp(log_w - logsumexp(log_w, axis=1, keepdims=True))
        cum = np.cumsum(probs, axis=1)
        idx = (cum < (us * cum[:, -1])[:, None]).sum(axis=1)
        return np.minimum(idx, m - 1)
    out = np.empty(n, dtype=int)
    log_w = np.full(m, -math.log(m))
    log_keep, log_spread = math.log1p(-share_rate) if share_rate < 1 else -math.inf, math.log(share_rate / m)
    for i in range(n):
        out[i] = pick(np.exp(log_w - logsumexp(log_w)), us[i])
        log_w = log_w - rate * costs[i]
        log_w = log_w - logsumexp(log_w)
        log_w = np.logaddexp(log_keep + log_w, log_spread)
    return out


@dataclass
class CombinedRun:
    """Outcome of running the combiner over a cost matrix."""

    choices: np.ndarray
    costs: np.ndarray
    total: float = field(init=False)

    def __post_init__(self):
        self.total = float(self.costs.sum())


def run_combiner(costs: np.ndarray, eps1: float, cost_bound: float, us: np.ndarray,
                 share_rate: float = 0.0) -> CombinedRun:
    """Charge each period the cost of the expert chosen from the earlier periods' costs."""
    costs = np.asarray(costs, dtype=float)
    if np.any(costs > cost_bound + COST_SLACK):
        raise CostBoundError("a period cost exceeds the declared bound")
    choices = hedge_choices(costs, eps1 / cost_bound, us, share_rate)
    return CombinedRun(choices, costs[np.arange(len(costs)), choices])
