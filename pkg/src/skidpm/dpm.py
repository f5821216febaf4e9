"""Multi-state dynamic power management via k parallel ski-rental instances.

Transition j (state j-1 -> j) is a ski-rental instance with rent rate
alpha_{j-1} - alpha_j and buy cost beta_j - beta_{j-1}. Its unit-cost
distribution is run on the time axis scaled by the breakpoint t_j.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .distribution import BuyDistribution, DistArray
from .skirental import build_cdf, build_unit_array, mu_of_rho


class SystemError_(ValueError):
    """Invalid power-state description."""


@dataclass(frozen=True)
class PowerStateSystem:
    alphas: tuple[float, ...]
    betas: tuple[float, ...]

    def __post_init__(self):
        a, b = self.alphas, self.betas
        if len(a) != len(b) or len(a) < 2:
            raise SystemError_("need at least two states with matching alphas/betas")
        if b[0] != 0:
            raise SystemError_("the active state must have zero wake-up cost")
        if a[-1] < 0:
            raise SystemError_("power consumption must be non-negative")
        if any(x <= y for x, y in zip(a, a[1:])):
            raise SystemError_("alphas must be strictly decreasing")
        if any(x >= y for x, y in zip(b, b[1:])):
            raise SystemError_("betas must be strictly increasing")
        object.__setattr__(self, "alphas", tuple(float(x) for x in a))
        object.__setattr__(self, "betas", tuple(float(x) for x in b))

    @property
    def k(self) -> int:
        return len(self.alphas) - 1

    @property
    def rent_gaps(self) -> np.ndarray:
        a = np.array(self.alphas)
        return a[:-1] - a[1:]

    @property
    def buy_gaps(self) -> np.ndarray:
        b = np.array(self.betas)
        return b[1:] - b[:-1]

    @property
    def breakpoints(self) -> np.ndarray:
        """t_j = (beta_j - beta_{j-1}) / (alpha_{j-1} - alpha_j), j = 1..k."""
        return self.buy_gaps / self.rent_gaps

    def is_pruned(self) -> bool:
        return bool(np.all(np.diff(self.breakpoints) > 0))


IBM_HDD = PowerStateSystem((1.0, 0.47, 0.105, 0.0), (0.0, 0.12, 0.33, 1.0))
TWO_STATE = PowerStateSystem((1.0, 0.0), (0.0, 1.0))


def prune_states(system: PowerStateSystem) -> PowerStateSystem:
    """Drop states that are never the offline optimum, until breakpoints increase strictly."""
    alphas, betas = list(system.alphas), list(system.betas)
    while True:
        t = PowerStateSystem(tuple(alphas), tuple(betas)).breakpoints
        bad = np.flatnonzero(t[1:] <= t[:-1])
        if not len(bad):
            return PowerStateSystem(tuple(alphas), tuple(betas))
        j = int(bad[0]) + 1
        del alphas[j], betas[j]


def offline_opt(system: PowerStateSystem, length: float) -> tuple[int, float]:
    """Optimal state for an idle period of known length, and its cost."""
    if length < 0:
        raise ValueError("length must be non-negative")
    j = int(np.searchsorted(system.breakpoints, length, side="right"))
    return j, system.alphas[j] * length + system.betas[j]


def offline_opt_costs(system: PowerStateSystem, lengths) -> np.ndarray:
    lengths = np.asarray(lengths, dtype=float)
    j = np.searchsorted(system.breakpoints, lengths, side="right")
    return np.asarray(system.alphas)[j] * lengths + np.asarray(system.betas)[j]


# A unit builder maps an array of unit-cost predictions to their distributions.
UnitBuilder = Callable[[np.ndarray], DistArray]


def ours_builder(rho: float, mu: Optional[float] = None) -> UnitBuilder:
    if mu is None:
        mu = mu_of_rho(rho)
    return lambda taus: build_unit_array(rho, mu, taus)


class PolicyArray:
    """Threshold policies for n idle periods: one unit distribution per transition and period."""

    def __init__(self, system: PowerStateSystem, dists: Sequence[DistArray]):
        if len(dists) != system.k:
            raise ValueError("need one distribution array per transition")
        self.system = system
        self.dists = list(dists)
        self.scales = system.breakpoints

    @classmethod
    def build(cls, system: PowerStateSystem, predictions, builder: UnitBuilder,
              cutoff: Optional[float] = None) -> "PolicyArray":
        predictions = np.asarray(predictions, dtype=float)
        dists = []
        for tj in system.breakpoints:
            d = builder(predictions / tj)
            if cutoff is not None:
                d = d.bounded(cutoff)
            dists.append(d)
        return cls(system, dists)

    def __len__(self):
        return len(self.dists[0])

    def cdfs(self, t) -> list[np.ndarray]:
        """F^j(t) = F_{tau/t_j}(t/t_j) for each transition j."""
        t = np.asarray(t, dtype=float)
        return [d.cdf(t / s) for d, s in zip(self.dists, self.scales)]

    def wakeup_expectation(self, t) -> np.ndarray:
        """B(t) = sum_i p_i(t) beta_i = sum_j (beta_j - beta_{j-1}) F^j(t)."""
        gaps = self.system.buy_gaps
        return sum(g * f for g, f in zip(gaps, self.cdfs(t)))

    def thresholds(self, u) -> np.ndarray:
        """A_j = inf{t : F^j(t) >= u}, shape (n, k)."""
        return np.stack([s * d.buy_time(u) for d, s in zip(self.dists, self.scales)], axis=1)

    def expected_costs(self, lengths) -> np.ndarray:
        lengths = np.asarray(lengths, dtype=float)
        out = self.system.alphas[-1] * lengths
        for d, s, g in zip(self.dists, self.scales, self.system.buy_gaps):
            out = out + g * d.expected_cost(lengths / s)
        return out

    def prudent_costs(self, lengths) -> np.ndarray:
        """Expected cost after replacing every state vector by its prudent form.

        The prudent running rate is the piecewise-linear interpolation of
        alpha over beta evaluated at B(t). Between the times where B(t)
        crosses a wake-up level the rate is affine in B, and B integrates in
        closed form, so only the crossing times need a numerical solve.
        """
        lengths = np.asarray(lengths, dtype=float)
        sys_ = self.system
        alphas, betas = np.asarray(sys_.alphas), np.asarray(sys_.betas)
        k = sys_.k
        levels = betas[1:]
        crossings = self._crossing_times(levels, lengths)  # (n, k)
        edges = np.concatenate([np.zeros((len(lengths), 1)), crossings, lengths[:, None]], axis=1)
        edges = np.maximum.accumulate(edges, axis=1)
        slopes = np.append(np.diff(alphas) / np.diff(betas), 0.0)
        intercepts = alphas - slopes * betas
        integral_b = self._integrated_wakeup(edges)  # (n, k+2)
        running = np.zeros(len(lengths))
        for m in range(k + 1):
            a, b = edges[:, m], edges[:, m + 1]
            running += intercepts[m] * (b - a) + slopes[m] * (integral_b[:, m + 1] - integral_b[:, m])
        return running + self.wakeup_expectation(lengths)

    def _integrated_wakeup(self, t) -> np.ndarray:
        gaps = self.system.buy_gaps
        return sum(g * s * d.integrated_cdf(t / s)
                   for d, s, g in zip(self.dists, self.scales, gaps))

    def _crossing_times(self, levels, lengths, max_iter: int = 60) -> np.ndarray:
        """inf{t in [0, l] : B(t) >= level} per row and level (l when never reached).

        B is a step-plus-exponential function: between consecutive support
        points of the F^j it is convex and increasing. The bracketing pair of
        support points is found by evaluating B there; inside the bracket
        Newton's method started at the right end converges monotonically.
        """
        n = len(lengths)
        gaps = self.system.buy_gaps
        col = lengths[:, None]
        pts = np.concatenate([s * d.support_points() for d, s in zip(self.dists, self.scales)], axis=1)
        pts = np.where(np.isfinite(pts) & (pts < col), np.maximum(pts, 0.0), col)
        pts = np.sort(np.concatenate([np.zeros((n, 1)), pts, col], axis=1), axis=1)
        b_pts = self.wakeup_expectation(pts)
        rows = np.arange(n)
        out = np.empty((n, len(levels)))
        for m, level in enumerate(levels):
            # relative slack keeps B(t) == beta_k (all mass in the deepest state) detectable
            target = level * (1 - 1e-13)
            reached = b_pts >= target
            idx = np.argmax(reached, axis=1)
            right = pts[rows, idx]
            left = pts[rows, np.maximum(idx - 1, 0)]
            jump = sum(g * d.atom_m * (s * d.atom_t == right)
                       for d, s, g in zip(self.dists, self.scales, gaps))
            t = right.copy()
            active = (idx > 0) & reached[rows, idx] & (
                self._smooth_wakeup(self.dists, right, right, jump) >= target)
            sel = np.flatnonzero(active)
            subs = [d.take(sel) for d in self.dists]
            ta, lo, rt, jp = right[sel], left[sel], right[sel], jump[sel]
            live = np.ones(len(sel), dtype=bool)
            for _ in range(max_iter):
                if not live.any():
                    break
                excess = self._smooth_wakeup(subs, ta, rt, jp) - target
                slope = self._wakeup_density(subs, ta)
                with np.errstate(divide="ignore", invalid="ignore"):
                    step = np.where(slope > 0, excess / slope, 0.0)
                new = np.maximum(ta - step, lo)
                done = (step <= 1e-15 * np.maximum(ta, 1.0)) | (new == ta)
                ta = np.where(live, new, ta)
                live &= ~done
            t[sel] = ta
            res = np.where(reached.any(axis=1), t, lengths)
            out[:, m] = np.where(idx == 0, np.where(reached[:, 0], 0.0, lengths), res)
        return out

    def _smooth_wakeup(self, dists, t, right, jump) -> np.ndarray:
        """B(t) for the rows held in ``dists``, without the atoms sitting at ``right``."""
        total = sum(g * d.cdf(t / s) for d, s, g in zip(dists, self.scales, self.system.buy_gaps))
        return total - np.where(t >= right, jump, 0.0)

    def _wakeup_density(self, dists, t) -> np.ndarray:
        """Left derivative of B for the rows held in ``dists``."""
        # nudge inwards so a right end that rounds past a segment end still sees the density
        t = t * (1 - 1e-12)
        return sum(g / s * d.density(t / s) for d, s, g in zip(dists, self.scales, self.system.buy_gaps))


@dataclass
class PeriodPolicy:
    """Threshold policy for a single idle period."""

    system: PowerStateSystem
    prediction: float
    sub_dists: tuple[BuyDistribution, ...]
    rho: Optional[float] = None
    mu: Optional[float] = None

    def as_array(self) -> PolicyArray:
        return PolicyArray(self.system, [d.array for d in self.sub_dists])


def build_policy(system: PowerStateSystem, tau: float, rho: float,
                 mu: Optional[float] = None) -> PeriodPolicy:
    """Our (rho, mu) algorithm on every transition; mu defaults to mu(rho)."""
    if mu is None:
        mu = mu_of_rho(rho)
    subs = tuple(build_cdf(rho, mu, tau / tj) for tj in system.breakpoints)
    return PeriodPolicy(system, tau, subs, rho, mu)


def policy_from_builder(system: PowerStateSystem, tau: float, builder: UnitBuilder) -> PeriodPolicy:
    arr = PolicyArray.build(system, [tau], builder)
    subs = tuple(BuyDistribution.from_array(d, 0, tau / tj)
                 for d, tj in zip(arr.dists, system.breakpoints))
    return PeriodPolicy(system, tau, subs)


def state_at(thresholds: np.ndarray, t: float) -> int:
    """Deepest state j with F^j(t) >= p, i.e. A_j <= t (F^0 = 1)."""
    reached = np.flatnonzero(thresholds <= t)
    return int(reached[-1]) + 1 if len(reached) else 0


def run_period(policy: PeriodPolicy, length: float, u: float) -> tuple[int, float]:
    """Simulate one idle period for the random draw ``u``; returns (final state, cost)."""
    if not 0.0 <= u <= 1.0:
        raise ValueError("u must lie in [0, 1]")
    alphas, betas = policy.system.alphas, policy.system.betas
    thr = policy.as_array().thresholds(np.array([u]))[0]
    events = sorted({0.0, length, *(a for a in thr if a < length)})
    cost = 0.0
    for a, b in zip(events, events[1:]):
        cost += alphas[state_at(thr, a)] * (b - a)
    final = state_at(thr, length)
    return final, cost + betas[final]


def transition_costs(policy: PeriodPolicy, length: float, u: float) -> np.ndarray:
    """Realised cost of each sub-instance: (beta gap) 1[A_j <= l] + (alpha gap) min(A_j, l)."""
    sys_ = policy.system
    thr = policy.as_array().thresholds(np.array([u]))[0]
    return sys_.buy_gaps * (thr <= length) + sys_.rent_gaps * np.minimum(thr, length)


def expected_period_cost(policy: PeriodPolicy, length: float) -> float:
    return float(policy.as_array().expected_costs(np.array([length]))[0])


def state_vector(policy: PeriodPolicy, t: float) -> np.ndarray:
    """Probabilities p_0..p_k of being in each state at time t."""
    f = [1.0] + [float(x[0]) for x in policy.as_array().cdfs(np.array([t]))] + [0.0]
    return np.array([f[i] - f[i + 1] for i in range(len(f) - 1)])


def prudent_vector(p, system: PowerStateSystem) -> np.ndarray:
    """Two-adjacent-state vector with the same expected wake-up cost as ``p``."""
    p = np.asarray(p, dtype=float)
    betas = np.asarray(system.betas)
    if p.shape != betas.shape or np.any(p < -1e-15) or abs(p.sum() - 1) > 1e-12:
        raise ValueError("not a probability vector over the system's states")
    bp = float(p @ betas)
    m = int(np.searchsorted(betas, bp, side="right")) - 1
    out = np.zeros_like(p)
    if m >= system.k:
        out[-1] = 1.0
        return out
    out[m] = (betas[m + 1] - bp) / (betas[m + 1] - betas[m])
    out[m + 1] = 1.0 - out[m]
    return out


def expected_prudent_period_cost(policy: PeriodPolicy, length: float) -> float:
    return float(policy.as_array().prudent_costs(np.array([length]))[0])


def prediction_error(system: PowerStateSystem, tau, length):
    """eta = alpha_0 |tau - l|."""
    return system.alphas[0] * np.abs(np.asarray(tau) - np.asarray(length))
