"""Independent checks of the analytic cost formulas and guarantees.

The quadrature oracle only uses the density values of a distribution and the
Monte-Carlo oracle only uses sampled buy times, so neither shares code with
the closed-form integrals in ``distribution``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

from .distribution import BuyDistribution, DistArray
from .dpm import PolicyArray, PowerStateSystem, ours_builder, prudent_vector
from .skirental import (RHO_MAX, build_cdf, build_unit_array, mu_of_rho, mu_tau,
                        t_of_tau_mu)

QUAD_TOL = 1e-10


# -- quadrature ----------------------------------------------------------------

def adaptive_simpson(f: Callable[[float], float], a: float, b: float, tol: float = QUAD_TOL,
                     max_depth: int = 50) -> float:
    """Adaptive Simpson rule with Richardson correction."""
    if b <= a:
        return 0.0

    def simpson(fa, fm, fb, a, b):
        return (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def recurse(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = simpson(fa, flm, fm, a, m)
        right = simpson(fm, frm, fb, m, b)
        delta = left + right - whole
        if depth <= 0 or abs(delta) <= 15.0 * tol:
            return left + right + delta / 15.0
        return (recurse(a, m, fa, flm, fm, left, tol / 2, depth - 1)
                + recurse(m, b, fm, frm, fb, right, tol / 2, depth - 1))

    fa, fb, fm = f(a), f(b), f(0.5 * (a + b))
    return recurse(a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, max_depth)


def quad_expected_cost(dist: BuyDistribution, x: float, tol: float = QUAD_TOL) -> float:
    """Expected cost by integrating the density piecewise; atoms are added exactly."""
    cost = dist.atom_zero + x * dist.atom_infinity
    if dist.cutoff_atom is not None:
        t, m = dist.cutoff_atom
        cost += m * ((1.0 + t) if t <= x else x)
    for seg in dist.segments:
        density = lambda t, c=seg.coeff: c * math.exp(t)
        split = min(max(x, seg.lo), seg.hi)
        cost += adaptive_simpson(lambda t: (1.0 + t) * density(t), seg.lo, split, tol)
        cost += x * adaptive_simpson(density, split, seg.hi, tol)
    return cost


# -- Monte Carlo ---------------------------------------------------------------

def mc_expected_cost(dist: BuyDistribution, x: float, n: int = 1_000_000,
                     seed: int = 0) -> tuple[float, float]:
    """(mean, standard error) of the realised cost over ``n`` inverse-CDF samples."""
    rng = np.random.Generator(np.random.Philox(seed))
    buy = dist.array.buy_time(rng.random(n))
    cost = np.where(buy <= x, 1.0 + np.where(np.isfinite(buy), buy, 0.0), x)
    # fsum keeps constant-cost samples exact
    mean = math.fsum(cost) / n
    se = math.sqrt(math.fsum((cost - mean) ** 2) / (n - 1) / n) if n > 1 else 0.0
    return mean, se


# -- sweeps --------------------------------------------------------------------

@dataclass
class SweepResult:
    max_violation: float
    worst: Optional[dict] = None
    checked: int = 0
    tol: float = 1e-7

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tol

    def merge(self, other: "SweepResult") -> "SweepResult":
        best = self if self.max_violation >= other.max_violation else other
        return SweepResult(best.max_violation, best.worst, self.checked + other.checked, self.tol)


def grid(lo: float, hi: float, step: float) -> np.ndarray:
    n = int(round((hi - lo) / step))
    return np.round(lo + step * np.arange(n + 1), 12)


def default_rho_grid(step: float = 0.05) -> np.ndarray:
    return np.append(grid(1.0, RHO_MAX, step)[grid(1.0, RHO_MAX, step) < RHO_MAX], RHO_MAX)


def _unit_dists(rho: float, taus: np.ndarray, mode: str,
                mu_offset: float) -> tuple[DistArray, np.ndarray]:
    if mode == "mu":
        mu = min(max(mu_of_rho(rho) + mu_offset, 0.0), 1.0)
        return build_unit_array(rho, mu, taus), np.full(len(taus), mu)
    if mode == "mu_tau":
        mus = np.array([min(max(mu_tau(rho, t) + mu_offset, 0.0), 1.0) for t in taus])
        return DistArray.concat([build_unit_array(rho, m, [t]) for m, t in zip(mus, taus)]), mus
    raise ValueError("mode must be 'mu' or 'mu_tau'")


def competitiveness_sweep(rhos: Iterable[float], taus, xs, mode: str = "mu",
                          mu_offset: float = 0.0, bound_mu_scale: float = 1.0,
                          cutoff: Optional[float] = None, tol: float = 1e-7) -> SweepResult:
    """max of E[cost] - (rho min(x, 1) + s mu |tau - x|) over the grid, s = ``bound_mu_scale``.

    ``mu_offset`` shifts the mu the algorithm is built with (and the bound).
    ``cutoff`` evaluates the bounded variant truncated at that unit time.
    """
    taus, xs = np.asarray(taus, float), np.asarray(xs, float)
    out = SweepResult(-math.inf, tol=tol)
    for rho in rhos:
        dists, mus = _unit_dists(float(rho), taus, mode, mu_offset)
        if cutoff is not None:
            dists = dists.bounded(cutoff)
        x2 = np.broadcast_to(xs, (len(taus), len(xs)))
        cost = dists.expected_cost(x2)
        bound = rho * np.minimum(x2, 1.0) + bound_mu_scale * mus[:, None] * np.abs(taus[:, None] - x2)
        gap = cost - bound
        i, j = np.unravel_index(np.argmax(gap), gap.shape)
        out = out.merge(SweepResult(float(gap[i, j]),
                                    {"rho": float(rho), "tau": float(taus[i]), "x": float(xs[j]),
                                     "mu": float(mus[i])}, gap.size, tol))
    return out


def monotonicity_check(rhos, taus, ts, mode: str = "mu", tol: float = 1e-10) -> SweepResult:
    """Largest drop of F_tau(t) when tau increases, over the grid."""
    taus = np.sort(np.asarray(taus, float))
    ts = np.asarray(ts, float)
    out = SweepResult(-math.inf, tol=tol)
    for rho in rhos:
        dists, _ = _unit_dists(float(rho), taus, mode, 0.0)
        cdf = dists.cdf(np.broadcast_to(ts, (len(taus), len(ts))))
        # any earlier tau with a larger CDF value is a violation
        drop = np.maximum.accumulate(cdf, axis=0) - cdf
        i, j = np.unravel_index(np.argmax(drop), drop.shape)
        out = out.merge(SweepResult(float(drop[i, j]),
                                    {"rho": float(rho), "tau": float(taus[i]), "t": float(ts[j])},
                                    drop.size, tol))
    return out


def dominance_check(rhos, taus, tol: float = 1e-9) -> SweepResult:
    """max of mu_tau(rho) - mu(rho) over the grid."""
    out = SweepResult(-math.inf, tol=tol)
    for rho in rhos:
        m = mu_of_rho(float(rho))
        for tau in taus:
            out = out.merge(SweepResult(mu_tau(float(rho), float(tau)) - m,
                                        {"rho": float(rho), "tau": float(tau)}, 1, tol))
    return out


def case_of(rho: float, mu: float, tau: float) -> int:
    if tau > 1:
        return 3
    return 1 if mu * tau < mu - rho + 1 else 2


@dataclass
class TightnessReport:
    rho: float
    tau: float
    mu: float
    case: int
    xs: np.ndarray
    deviation: np.ndarray = field(repr=False)

    @property
    def max_abs_deviation(self) -> float:
        return float(np.max(np.abs(self.deviation))) if self.deviation.size else 0.0

    def passed(self, tol: float = 1e-7) -> bool:
        return self.max_abs_deviation <= tol


def tightness_check(rho: float, tau: float, n: int = 101, x_max: float = 5.0) -> TightnessReport:
    """cost(x) - (rho opt(x) + mu_tau |tau - x|) on the set of x where equality is expected."""
    mu = mu_tau(rho, tau)
    case = case_of(rho, mu, tau)
    if case == 1:
        xs = np.linspace(tau, max(x_max, tau + 1), n)
    elif case == 2:
        xs = np.linspace(0.0, x_max, n)
    else:
        xs = np.array([tau]) if mu * tau >= 1 else np.append(
            np.linspace(0.0, t_of_tau_mu(rho, mu, tau), n), tau)
    dist = build_cdf(rho, mu, tau)
    cost = dist.array.expected_cost(np.broadcast_to(xs, (1, len(xs))))[0]
    dev = cost - (rho * np.minimum(xs, 1.0) + mu * np.abs(tau - xs))
    return TightnessReport(rho, tau, mu, case, xs, dev)


# -- DPM -------------------------------------------------------------------

def brute_opt(system: PowerStateSystem, length: float) -> float:
    return min(a * length + b for a, b in zip(system.alphas, system.betas))


def dpm_reduction_sweep(system: PowerStateSystem, rhos, taus, lengths, mu: Optional[float] = None,
                        mu_offset: float = 0.0, tol: float = 1e-7) -> SweepResult:
    """max of E[period cost] - (rho OPT + mu(rho) alpha_0 |tau - l|)."""
    taus, lengths = np.asarray(taus, float), np.asarray(lengths, float)
    opt = np.array([brute_opt(system, l) for l in lengths])
    out = SweepResult(-math.inf, tol=tol)
    for rho in rhos:
        m = min(max((mu_of_rho(float(rho)) if mu is None else mu) + mu_offset, 0.0), 1.0)
        pol = PolicyArray.build(system, taus, ours_builder(float(rho), m))
        l2 = np.broadcast_to(lengths, (len(taus), len(lengths)))
        cost = pol.expected_costs(l2)
        gap = cost - (rho * opt[None, :] + m * system.alphas[0] * np.abs(taus[:, None] - l2))
        i, j = np.unravel_index(np.argmax(gap), gap.shape)
        out = out.merge(SweepResult(float(gap[i, j]), {"rho": float(rho), "tau": float(taus[i]),
                                                       "length": float(lengths[j])}, gap.size, tol))
    return out


@dataclass
class PrudenceReport:
    wakeup_error: float
    rate_increase: float
    checked: int

    def passed(self, tol: float = 1e-12) -> bool:
        return self.wakeup_error <= tol and self.rate_increase <= tol


def prudence_check(system: PowerStateSystem, n: int = 10_000, seed: int = 0) -> PrudenceReport:
    """Prudent vectors of random state vectors: same wake-up cost, no larger running rate."""
    rng = np.random.Generator(np.random.Philox(seed))
    alphas, betas = np.asarray(system.alphas), np.asarray(system.betas)
    ps = rng.dirichlet(np.ones(len(alphas)), n)
    # include sparse vectors, which hit the boundary cases
    ps[: n // 4] *= rng.random((n // 4, len(alphas))) < 0.5
    ps[: n // 4, 0] += ps[: n // 4].sum(axis=1) == 0
    ps /= ps.sum(axis=1, keepdims=True)
    wake, rate = 0.0, -math.inf
    for p in ps:
        q = prudent_vector(p, system)
        wake = max(wake, abs(q @ betas - p @ betas))
        rate = max(rate, q @ alphas - p @ alphas)
    return PrudenceReport(wake, rate, n)
