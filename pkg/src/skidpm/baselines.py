"""Reference ski-rental policies, all in unit-cost time.

PSK and ADJKR are the continuous-time analogues of the randomized algorithm
of Purohit, Svitkina and Kumar and the deterministic algorithm of
Angelopoulos et al., parametrised by their consistency.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .distribution import BuyDistribution, DistArray
from .skirental import RHO_MAX, bisect, build_unit_array


@dataclass(frozen=True)
class BaselinePolicy:
    kind: str
    dist: BuyDistribution
    param: Optional[float] = None

    @property
    def deterministic(self) -> bool:
        d = self.dist
        masses = [d.atom_zero, d.atom_infinity, d.cutoff_atom[1] if d.cutoff_atom else 0.0]
        return not d.segments and max(masses) == 1.0


def _one(arr: DistArray, tau: float) -> BuyDistribution:
    return BuyDistribution.from_array(arr, 0, tau)


# -- vectorised builders -----------------------------------------------------

def ftp_array(taus) -> DistArray:
    """Buy at time 0 iff the prediction is at least the break-even time 1."""
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    d = DistArray.empty(len(taus))
    buy = taus >= 1
    d.p0[buy] = 1.0
    d.pinf[~buy] = 1.0
    return d


def deterministic_array(buy_times) -> DistArray:
    buy_times = np.atleast_1d(np.asarray(buy_times, dtype=float))
    d = DistArray.empty(len(buy_times))
    now = buy_times <= 0
    never = np.isinf(buy_times)
    later = ~now & ~never
    d.p0[now] = 1.0
    d.pinf[never] = 1.0
    d.atom_t[later] = buy_times[later]
    d.atom_m[later] = 1.0
    return d


def psk_array(taus, lam: float) -> DistArray:
    """Density proportional to e^t on [0, lam] if tau >= 1, else on [0, 1/lam]."""
    if not 0 < lam <= 1:
        raise ValueError("lambda must lie in (0, 1]")
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    d = DistArray.empty(len(taus))
    hi = np.where(taus >= 1, lam, 1.0 / lam)
    d.hi[:, 0] = hi
    d.coeff[:, 0] = 1.0 / np.expm1(hi)
    return d


def adjkr_array(taus, lam: float) -> DistArray:
    """Buy at lam if the prediction says buy, otherwise at 1/lam (never when lam = 0)."""
    if not 0 <= lam <= 1:
        raise ValueError("lambda must lie in [0, 1]")
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    late = 1.0 / lam if lam > 0 else math.inf
    return deterministic_array(np.where(taus >= 1, lam, late))


# -- consistency <-> hyperparameter -----------------------------------------

def psk_consistency(lam: float) -> float:
    return lam / -math.expm1(-lam)


def psk_lambda(rho: float) -> float:
    """lambda in (0, 1] whose PSK consistency lambda / (1 - e^-lambda) equals rho."""
    if not 1.0 < rho <= RHO_MAX + 1e-12:
        raise ValueError("PSK consistency must lie in (1, e/(e-1)]")
    return bisect(lambda lam: psk_consistency(lam) - rho, 1e-12, 1.0)


def adjkr_lambda(rho: float) -> float:
    """Early buy time for consistency rho in [1, 2]; the robustness is rho / (rho - 1)."""
    if not 1.0 <= rho <= 2.0:
        raise ValueError("ADJKR consistency must lie in [1, 2]")
    return rho - 1.0


# -- scalar constructors ------------------------------------------------------

def ftp(tau: float) -> BaselinePolicy:
    return BaselinePolicy("FTP", _one(ftp_array([tau]), tau))


def det_breakeven() -> BaselinePolicy:
    return BaselinePolicy("Det2", _one(deterministic_array([1.0]), 0.0))


def rand_classic() -> BaselinePolicy:
    return BaselinePolicy("RandClassic", _one(build_unit_array(RHO_MAX, 0.0, [0.0]), 0.0))


def psk_rand(tau: float, lam: float) -> BaselinePolicy:
    return BaselinePolicy("PSK", _one(psk_array([tau], lam), tau), lam)


def adjkr_det(tau: float, lam: float) -> BaselinePolicy:
    return BaselinePolicy("ADJKR", _one(adjkr_array([tau], lam), tau), lam)
