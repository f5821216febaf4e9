"""(rho, mu)-competitive randomized ski rental with a predicted season length.

All quantities use unit costs (rent rate 1, buy cost 1); see
``distribution.scale`` for general costs.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .distribution import BuyDistribution, DistArray, RhoMu

E = math.e
RHO_MAX = E / (E - 1)
LN2 = math.log(2)
ROOT_TOL = 1e-12
MU_SLACK = 1e-9


class DomainError(ValueError):
    pass


class ParameterError(ValueError):
    pass


def bisect(f, lo: float, hi: float, tol: float = 1e-15, maxiter: int = 200) -> float:
    """Root of an increasing function ``f`` on [lo, hi] by bisection.

    Returns the endpoint when ``f`` does not change sign.
    """
    flo, fhi = f(lo), f(hi)
    if flo >= 0:
        return lo
    if fhi <= 0:
        return hi
    for _ in range(maxiter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi or hi - lo <= tol:
            break
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _check_rho(rho: float):
    if not 1.0 <= rho <= RHO_MAX + ROOT_TOL:
        raise DomainError(f"rho={rho} outside [1, e/(e-1)]")


def solve_T(rho: float) -> float:
    """T in [0, 1] with T^2 e^{-T} = 1 - 1/rho (the map is increasing on [0, 1])."""
    _check_rho(rho)
    target = 1.0 - 1.0 / rho
    if target <= 0:
        return 0.0
    return bisect(lambda t: t * t * math.exp(-t) - target, 0.0, 1.0)


def _mu_linear(rho: float) -> float:
    return (1.0 - rho * (E - 1) / E) / LN2


def _mu_curved(rho: float) -> float:
    t = solve_T(rho)
    return rho * (1.0 - t) * math.exp(-t)


def mu_of_rho(rho: float) -> float:
    """Smallest error coefficient achievable for consistency rho, worst case over predictions."""
    _check_rho(rho)
    if rho >= RHO_MAX - ROOT_TOL:
        return 0.0
    return max(_mu_linear(rho), _mu_curved(rho), 0.0)


@lru_cache(maxsize=None)
def rho_tilde() -> float:
    """The rho where both branches of mu(rho) coincide (about 1.1596)."""
    return bisect(lambda r: _mu_linear(r) - _mu_curved(r), 1.0, 1.4, tol=1e-14)


def inverse_mu(mu: float) -> float:
    """rho in [1, rho_tilde] with mu(rho) = mu, for mu in [mu(rho_tilde), 1]."""
    lo_rho = rho_tilde()
    if not mu_of_rho(lo_rho) - ROOT_TOL <= mu <= 1.0:
        raise DomainError(f"mu={mu} not attained on [1, rho_tilde]")
    # mu is decreasing in rho
    return bisect(lambda r: mu - mu_of_rho(r), 1.0, lo_rho)


def t_of_tau_mu(rho: float, mu: float, tau: float) -> float:
    """Time at which the Case-3 density stops: tau - 1 projected on the feasible interval."""
    if tau <= 1 or mu * tau >= 1:
        raise DomainError("requires tau > 1 and mu * tau < 1")
    c = mu * tau + rho - mu - 1.0
    if c <= 0:
        raise ParameterError("zero density coefficient: mu is below mu_tau(rho)")
    upper = math.log((rho - mu) / c)
    lower = math.log((rho - 2 * mu) / c) if rho - 2 * mu > 0 else -math.inf
    if lower > upper + ROOT_TOL:
        raise ParameterError("empty feasible interval for T")
    return min(max(tau - 1.0, lower), upper)


def case3_cost_at_tau(rho: float, mu: float, tau: float) -> float:
    """Expected cost at x = tau of the Case-3 distribution, rho*tau + (T-tau) c e^T."""
    c = mu * tau + rho - mu - 1.0
    if c <= 0:
        # no density: never buys unless mu*tau >= 1
        return rho * tau
    if mu * tau >= 1:
        return 1.0
    t = t_of_tau_mu(rho, mu, tau)
    return rho * tau + (t - tau) * c * math.exp(t)


def mu_tau(rho: float, tau: float) -> float:
    """Smallest mu such that a (rho, mu)-competitive algorithm exists for prediction tau."""
    _check_rho(rho)
    if tau < 0:
        raise DomainError("tau must be non-negative")
    if tau <= 1:
        if (1 - tau) * math.exp(tau - 1) > 2 - 2 / rho:
            value = -(rho - 1) / (1 - tau) + rho * math.exp(tau - 1)
        else:
            value = math.exp(tau) * (1 - rho * (E - 1) / E) / (2 - (1 - tau) * math.exp(tau))
        return max(value, 0.0)
    # cost(tau, mu) is decreasing in mu and equals rho at mu_tau
    g = lambda m: rho - case3_cost_at_tau(rho, m, tau)
    if g(0.0) >= 0:
        return 0.0
    return bisect(g, 0.0, 1.0 / tau, tol=1e-15)


def _unit_array(rho: float, mu: float, tau: np.ndarray) -> DistArray:
    tau = np.asarray(tau, dtype=float)
    n = len(tau)
    d = DistArray.empty(n)
    c3 = tau > 1
    c1 = ~c3 & (mu * tau < mu - rho + 1)
    c2 = ~c3 & ~c1
    seg_hi_coeff = rho / E  # rho e^{t-1}

    if c1.any():
        t = tau[c1]
        p0 = t * (rho - 1) / (1 - t)
        pinf = np.minimum(mu, 1 - p0)
        rest = np.maximum(1 - p0 - pinf, 0.0)
        # rest = integral of rho e^{t-1} over (b, 1]
        b = 1 + np.log1p(-rest / rho)
        d.p0[c1] = p0
        d.pinf[c1] = pinf
        d.lo[c1, 1], d.hi[c1, 1], d.coeff[c1, 1] = b, 1.0, np.where(rest > 0, seg_hi_coeff, 0.0)

    if c2.any():
        t = tau[c2]
        p0 = mu * t
        pinf = np.minimum(mu, 1 - p0)
        c = np.maximum(mu * t + rho - mu - 1, 0.0)
        free = np.maximum(1 - p0 - pinf, 0.0)
        with np.errstate(divide="ignore"):
            a = np.where(c > 0, np.minimum(t, np.log1p(free / np.where(c > 0, c, 1.0))), t)
        rest = np.maximum(free - c * np.expm1(a), 0.0)
        # a == b up to rounding when both pieces meet at tau
        b = np.maximum(1 + np.log1p(-rest / rho), a)
        d.p0[c2] = p0
        d.pinf[c2] = pinf
        d.lo[c2, 0], d.hi[c2, 0], d.coeff[c2, 0] = 0.0, a, c
        d.lo[c2, 1], d.hi[c2, 1], d.coeff[c2, 1] = b, 1.0, np.where(rest > 0, seg_hi_coeff, 0.0)

    if c3.any():
        idx = np.flatnonzero(c3)
        t = tau[idx]
        now = mu * t >= 1
        d.p0[idx[now]] = 1.0
        idx, t = idx[~now], t[~now]
        if len(idx):
            c = mu * t + rho - mu - 1
            if np.any(c <= 0):
                raise ParameterError("mu below mu_tau(rho) for some tau > 1")
            upper = np.log((rho - mu) / c)
            with np.errstate(divide="ignore", invalid="ignore"):
                lower = np.where(rho - 2 * mu > 0, np.log((rho - 2 * mu) / c), -np.inf)
            T = np.minimum(np.maximum(t - 1, lower), upper)
            d.p0[idx] = mu * t
            d.lo[idx, 0], d.hi[idx, 0], d.coeff[idx, 0] = 0.0, T, c
            d.pinf[idx] = rho - mu - c * np.exp(T)
    return d


def build_unit_array(rho: float, mu: float, taus) -> DistArray:
    """Vectorised construction for many predictions at once.

    No feasibility check is made: ``mu`` must be at least ``mu_tau(rho)`` for
    every prediction, which holds for ``mu = mu_of_rho(rho)``.
    """
    return _unit_array(rho, mu, np.atleast_1d(np.asarray(taus, dtype=float)))


def build_cdf(rho: float, mu: float, tau: float) -> BuyDistribution:
    """Buy-time distribution of the (rho, mu)-competitive algorithm for prediction tau."""
    _check_rho(rho)
    if tau < 0:
        raise DomainError("tau must be non-negative")
    if not 0.0 <= mu <= 1.0:
        raise DomainError("mu must lie in [0, 1]")
    floor = mu_tau(rho, tau)
    if mu < floor - MU_SLACK:
        raise ParameterError(f"mu={mu} below mu_tau(rho={rho}, tau={tau})={floor}")
    mu = max(mu, floor)
    arr = _unit_array(rho, mu, np.array([tau]))
    return BuyDistribution.from_array(arr, 0, tau, RhoMu(min(rho, RHO_MAX), mu))
