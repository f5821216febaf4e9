"""Buy-time distributions for unit-cost ski rental.

A distribution is a mixture of
  * an atom at time 0,
  * up to two density pieces ``c * e^t`` on ``(lo, hi]``,
  * an atom at a finite time (deterministic buy time or a cost cutoff),
  * mass at infinity (never buy).

``DistArray`` stores many such distributions row-wise so that a whole
dataset of idle periods can be evaluated with numpy. ``BuyDistribution``
is the scalar, immutable view used by the public API.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

N_SEGMENTS = 2
MASS_TOL = 1e-12


@dataclass(frozen=True)
class RhoMu:
    rho: float
    mu: float

    def __post_init__(self):
        if not 1.0 <= self.rho <= math.e / (math.e - 1) + 1e-12:
            raise ValueError(f"rho={self.rho} outside [1, e/(e-1)]")
        if not 0.0 <= self.mu <= 1.0:
            raise ValueError(f"mu={self.mu} outside [0, 1]")


@dataclass(frozen=True)
class CostPair:
    """Rent rate ``alpha`` and buy cost ``beta`` of a ski-rental instance."""

    rent_rate: float
    buy_cost: float

    def __post_init__(self):
        if not (self.rent_rate > 0 and self.buy_cost > 0):
            raise ValueError("rent rate and buy cost must be positive")

    @property
    def time_scale(self) -> float:
        """Real time corresponding to one unit of unit-cost time (beta/alpha)."""
        return self.buy_cost / self.rent_rate


UNIT_COSTS = CostPair(1.0, 1.0)


@dataclass(frozen=True)
class Segment:
    lo: float
    hi: float
    coeff: float

    @property
    def mass(self) -> float:
        return self.coeff * (math.exp(self.hi) - math.exp(self.lo))


class DistArray:
    """Row-wise storage of ``n`` unit-cost buy-time distributions."""

    def __init__(self, p0, lo, hi, coeff, atom_t, atom_m, pinf):
        self.p0 = np.asarray(p0, dtype=float)
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        self.coeff = np.asarray(coeff, dtype=float)
        self.atom_t = np.asarray(atom_t, dtype=float)
        self.atom_m = np.asarray(atom_m, dtype=float)
        self.pinf = np.asarray(pinf, dtype=float)

    @classmethod
    def empty(cls, n: int) -> "DistArray":
        z = np.zeros(n)
        zs = np.zeros((n, N_SEGMENTS))
        return cls(z.copy(), zs.copy(), zs.copy(), zs.copy(),
                   np.full(n, np.inf), z.copy(), z.copy())

    def __len__(self):
        return len(self.p0)

    def take(self, idx) -> "DistArray":
        return DistArray(self.p0[idx], self.lo[idx], self.hi[idx], self.coeff[idx],
                         self.atom_t[idx], self.atom_m[idx], self.pinf[idx])

    @staticmethod
    def concat(parts: Sequence["DistArray"]) -> "DistArray":
        return DistArray(*(np.concatenate([getattr(p, name) for p in parts])
                           for name in ("p0", "lo", "hi", "coeff", "atom_t", "atom_m", "pinf")))

    def segment_mass(self) -> np.ndarray:
        return self.coeff * (np.exp(self.hi) - np.exp(self.lo))

    def total_mass(self) -> np.ndarray:
        return self.p0 + self.segment_mass().sum(axis=1) + self.atom_m + self.pinf

    def _bcast(self, t):
        """Broadcast per-row parameters against ``t`` of shape (n,) or (n, m)."""
        t = np.asarray(t, dtype=float)
        extra = (None,) * (t.ndim - 1)

        def col(a):
            return a[(slice(None),) + extra]

        def seg(a, s):
            return a[(slice(None), s) + extra]
        return t, col, seg

    def cdf(self, t) -> np.ndarray:
        """P(buy time <= t), for t >= 0."""
        t, col, seg = self._bcast(t)
        out = np.broadcast_to(col(self.p0), t.shape).copy()
        for s in range(N_SEGMENTS):
            lo, hi, c = seg(self.lo, s), seg(self.hi, s), seg(self.coeff, s)
            h = np.minimum(np.maximum(t, lo), hi)
            out += c * (np.exp(h) - np.exp(lo))
        out += np.where(col(self.atom_t) <= t, col(self.atom_m), 0.0)
        return out

    def density(self, t) -> np.ndarray:
        """Density of the continuous part, left-continuous at segment ends."""
        t, col, seg = self._bcast(t)
        out = np.zeros(t.shape)
        for s in range(N_SEGMENTS):
            lo, hi, c = seg(self.lo, s), seg(self.hi, s), seg(self.coeff, s)
            out += np.where((lo < t) & (t <= hi), c * np.exp(np.minimum(t, hi)), 0.0)
        return out

    def support_points(self) -> np.ndarray:
        """Segment ends and the finite atom per row, shape (n, 2 * N_SEGMENTS + 1)."""
        return np.concatenate([self.lo, self.hi, self.atom_t[:, None]], axis=1)

    def integrated_cdf(self, x) -> np.ndarray:
        """Closed form of the integral of the CDF over [0, x]."""
        x, col, seg = self._bcast(x)
        out = col(self.p0) * x
        for s in range(N_SEGMENTS):
            lo, hi, c = seg(self.lo, s), seg(self.hi, s), seg(self.coeff, s)
            h = np.minimum(np.maximum(x, lo), hi)
            elo = np.exp(lo)
            inside = np.exp(h) - elo - elo * (h - lo)
            after = (np.exp(hi) - elo) * np.maximum(x - hi, 0.0)
            out = out + c * (inside + after)
        at = col(self.atom_t)
        gap = np.where(np.isfinite(at), np.maximum(x - np.where(np.isfinite(at), at, 0.0), 0.0), 0.0)
        return out + col(self.atom_m) * gap

    def expected_cost(self, x) -> np.ndarray:
        """Expected ski-rental cost when the season ends at x (unit costs).

        A buy at time t <= x costs 1 + t, otherwise the algorithm pays x.
        """
        x, col, seg = self._bcast(x)
        out = np.broadcast_to(col(self.p0), x.shape).copy()
        for s in range(N_SEGMENTS):
            lo, hi, c = seg(self.lo, s), seg(self.hi, s), seg(self.coeff, s)
            h = np.minimum(np.maximum(x, lo), hi)
            # d/dt (t e^t) = (1 + t) e^t
            out += c * (h * np.exp(h) - lo * np.exp(lo))
            out += x * c * (np.exp(hi) - np.exp(h))
        atom_t, atom_m = col(self.atom_t), col(self.atom_m)
        finite = np.isfinite(atom_t)
        bought = finite & (atom_t <= x)
        out += atom_m * np.where(bought, 1.0 + np.where(finite, atom_t, 0.0), x)
        out += x * col(self.pinf)
        return out

    def buy_time(self, u) -> np.ndarray:
        """inf{t : F(t) >= u} per row; ``inf`` means never buy."""
        u = np.asarray(u, dtype=float)
        res = np.where(u <= self.p0, 0.0, np.nan)
        acc = self.p0.copy()
        for s in range(N_SEGMENTS):
            lo, hi, c = self.lo[:, s], self.hi[:, s], self.coeff[:, s]
            mass = c * (np.exp(hi) - np.exp(lo))
            hit = np.isnan(res) & (mass > 0) & (u <= acc + mass)
            with np.errstate(divide="ignore", invalid="ignore"):
                t = np.log(np.exp(lo) + (u - acc) / c)
            res = np.where(hit, np.clip(t, lo, hi), res)
            acc = acc + mass
        hit = np.isnan(res) & (self.atom_m > 0) & (u <= acc + self.atom_m)
        res = np.where(hit, self.atom_t, res)
        # rounding can leave u just above the total finite mass; that still buys
        last = np.where(self.atom_m > 0, self.atom_t,
                        np.max(np.where(self.segment_mass() > 0, self.hi, 0.0), axis=1))
        res = np.where(np.isnan(res) & (self.pinf <= MASS_TOL), last, res)
        return np.where(np.isnan(res), np.inf, res)

    def bounded(self, cutoff: float) -> "DistArray":
        """Move all mass beyond ``cutoff`` (including never-buy) to an atom at cutoff."""
        out = DistArray(self.p0.copy(), np.minimum(self.lo, cutoff), np.minimum(self.hi, cutoff),
                        self.coeff.copy(), self.atom_t.copy(), self.atom_m.copy(), np.zeros(len(self)))
        moved = self.pinf + (self.segment_mass() - out.segment_mass()).sum(axis=1)
        late_atom = self.atom_t > cutoff
        moved = moved + np.where(late_atom, self.atom_m, 0.0)
        keep_atom = ~late_atom & (self.atom_m > 0)
        if np.any(keep_atom & (moved > MASS_TOL)):
            raise ValueError("cannot add a cutoff atom to a distribution that already has a finite atom")
        out.atom_t = np.where(keep_atom, self.atom_t, cutoff)
        out.atom_m = np.where(keep_atom, self.atom_m, moved)
        return out


@dataclass(frozen=True)
class BuyDistribution:
    """Immutable unit-cost buy-time distribution for a single prediction."""

    atom_zero: float
    segments: tuple[Segment, ...] = ()
    cutoff_atom: Optional[tuple[float, float]] = None
    atom_infinity: float = 0.0
    prediction: float = 0.0
    params: Optional[RhoMu] = None
    _array: DistArray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if len(self.segments) > N_SEGMENTS:
            raise ValueError(f"at most {N_SEGMENTS} density segments supported")
        prev = -math.inf
        for seg in self.segments:
            if seg.lo > seg.hi or seg.lo < prev or seg.coeff < 0:
                raise ValueError(f"bad segment {seg}")
            prev = seg.hi
        if self._array is None:
            object.__setattr__(self, "_array", self._to_array())
        total = float(self._array.total_mass()[0])
        if abs(total - 1.0) > MASS_TOL:
            raise ValueError(f"total probability {total!r} != 1")

    def _to_array(self) -> DistArray:
        arr = DistArray.empty(1)
        arr.p0[0] = self.atom_zero
        for s, seg in enumerate(self.segments):
            arr.lo[0, s], arr.hi[0, s], arr.coeff[0, s] = seg.lo, seg.hi, seg.coeff
        if self.cutoff_atom is not None:
            arr.atom_t[0], arr.atom_m[0] = self.cutoff_atom
        arr.pinf[0] = self.atom_infinity
        return arr

    @classmethod
    def from_array(cls, arr: DistArray, i: int, prediction: float = 0.0,
                   params: Optional[RhoMu] = None) -> "BuyDistribution":
        segs = tuple(Segment(float(arr.lo[i, s]), float(arr.hi[i, s]), float(arr.coeff[i, s]))
                     for s in range(N_SEGMENTS)
                     if arr.coeff[i, s] > 0 and arr.hi[i, s] > arr.lo[i, s])
        atom = None
        if np.isfinite(arr.atom_t[i]):
            atom = (float(arr.atom_t[i]), float(arr.atom_m[i]))
        return cls(float(arr.p0[i]), segs, atom, float(arr.pinf[i]), prediction, params,
                   arr.take(slice(i, i + 1)))

    @property
    def array(self) -> DistArray:
        return self._array

    def cdf(self, t: float) -> float:
        return float(self._array.cdf(np.array([t]))[0])

    def expected_cost(self, x: float) -> float:
        return float(self._array.expected_cost(np.array([x]))[0])

    def buy_time(self, u: float) -> float:
        return float(self._array.buy_time(np.array([u]))[0])

    def density(self, t: float) -> float:
        return sum(seg.coeff * math.exp(t) for seg in self.segments if seg.lo < t <= seg.hi)


def cdf_eval(dist: BuyDistribution, t: float) -> float:
    if t < 0:
        raise ValueError("t must be non-negative")
    return dist.cdf(t)


def sample_buy_time(dist: BuyDistribution, u: float) -> float:
    """Earliest t with F(t) >= u; ``math.inf`` when the policy never buys."""
    if not 0.0 <= u <= 1.0:
        raise ValueError("u must lie in [0, 1]")
    return dist.buy_time(u)


def expected_cost(dist: BuyDistribution, x: float) -> float:
    if x < 0:
        raise ValueError("season length must be non-negative")
    return dist.expected_cost(x)


@dataclass(frozen=True)
class ScaledPolicy:
    """A unit-cost distribution run on an instance with rent rate alpha and buy cost beta.

    The unit distribution must have been built for prediction ``(alpha/beta) * tau``.
    """

    unit: BuyDistribution
    costs: CostPair

    def cdf(self, t: float) -> float:
        return self.unit.cdf(t / self.costs.time_scale)

    def buy_time(self, u: float) -> float:
        return self.costs.time_scale * self.unit.buy_time(u)

    def expected_cost(self, x: float) -> float:
        return self.costs.buy_cost * self.unit.expected_cost(x / self.costs.time_scale)


def scale(dist: BuyDistribution, costs: CostPair) -> ScaledPolicy:
    return ScaledPolicy(dist, costs)


def unit_prediction(tau: float, costs: CostPair) -> float:
    """Prediction handed to the unit-cost algorithm for a real prediction ``tau``."""
    return tau / costs.time_scale


def cutoff_time(eps: float, costs: CostPair = UNIT_COSTS) -> float:
    """Time after which the bounded variant has surely bought: (beta/alpha)(3 + 1/eps)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    return costs.time_scale * (3.0 + 1.0 / eps)


def bounded_variant(dist: BuyDistribution, eps: float) -> BuyDistribution:
    """Truncate the CDF to 1 at the unit-time cutoff 3 + 1/eps.

    Scaling the result with ``scale`` places the cutoff at (beta/alpha)(3 + 1/eps)
    and caps the cost of any period at beta * (4 + 1/eps).
    """
    arr = dist.array.bounded(cutoff_time(eps))
    return BuyDistribution.from_array(arr, 0, dist.prediction, dist.params)
