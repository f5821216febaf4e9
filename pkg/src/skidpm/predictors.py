"""Prediction sources for idle-period lengths."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


def noisy_prediction(length, sigma: float, u_normal):
    """Length plus Gaussian noise, negative values rounded up to 0."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    return np.maximum(0.0, np.asarray(length, dtype=float) + sigma * np.asarray(u_normal, dtype=float))


class PredictorConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SharePredictor:
    """Multiplicative weights over candidate durations with weight sharing.

    ``rate < 0`` rewards the experts with the largest loss, which gives a
    deliberately bad predictor.
    """

    expert_durations: np.ndarray
    log_weights: np.ndarray
    rate: float = 0.5
    share: float = 0.05
    loss_cap: float = 1.0

    @classmethod
    def create(cls, scale: float = 2.0, n_experts: int = 64, rate: float = 0.5,
               share: float = 0.05, bad: bool = False) -> "SharePredictor":
        if n_experts < 1:
            raise PredictorConfigError("expert grid is empty")
        grid = np.geomspace(0.01 * scale, 4.0 * scale, n_experts)
        return cls.from_grid(grid, -abs(rate) if bad else abs(rate), share)

    @classmethod
    def from_grid(cls, grid, rate: float = 0.5, share: float = 0.05) -> "SharePredictor":
        grid = np.sort(np.asarray(grid, dtype=float))
        if grid.size == 0:
            raise PredictorConfigError("expert grid is empty")
        if np.any(grid < 0):
            raise PredictorConfigError("expert durations must be non-negative")
        if not 0 <= share <= 1:
            raise PredictorConfigError("share must lie in [0, 1]")
        cap = float(grid[-1] - grid[0]) or 1.0
        return cls(grid, np.zeros(grid.size), float(rate), float(share), cap)

    @property
    def weights(self) -> np.ndarray:
        w = np.exp(self.log_weights - self.log_weights.max())
        return w / w.sum()


def share_predict(state: SharePredictor) -> float:
    """Weighted median of the expert durations."""
    cum = np.cumsum(state.weights)
    return float(state.expert_durations[np.searchsorted(cum, 0.5 * cum[-1])])


def share_update(state: SharePredictor, observed_length: float) -> SharePredictor:
    loss = np.minimum(np.abs(state.expert_durations - observed_length), state.loss_cap) / state.loss_cap
    w = state.weights * np.exp(-state.rate * loss)
    w = w / w.sum()
    w = (1 - state.share) * w + state.share / w.size
    return replace(state, log_weights=np.log(w))


def share_predictions(lengths, scale: float = 2.0, bad: bool = False, **kwargs) -> np.ndarray:
    """Predict each length from the ones before it."""
    state = SharePredictor.create(scale=scale, bad=bad, **kwargs)
    out = np.empty(len(lengths))
    for i, length in enumerate(lengths):
        out[i] = share_predict(state)
        state = share_update(state, float(length))
    return out
