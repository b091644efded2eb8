"""Laplace model of reward residuals and the scalar uncertainty score."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

DEFAULT_SCALE_FLOOR = 1e-6


@dataclass(frozen=True)
class UncertaintyConfig:
    window: int = 5
    scale_floor: float = DEFAULT_SCALE_FLOOR
    lambda_spread: float = 0.5


@dataclass(frozen=True, eq=False)
class RewardSeries:
    """Predicted and observed reward vectors, both shaped (T, d)."""

    predicted: np.ndarray
    observed: np.ndarray

    def __post_init__(self):
        pred = np.atleast_2d(np.asarray(self.predicted, dtype=float))
        obs = np.atleast_2d(np.asarray(self.observed, dtype=float))
        if pred.shape != obs.shape:
            raise ValueError(f"shape mismatch: predicted {pred.shape} vs observed {obs.shape}")
        if pred.shape[0] < 1 or pred.shape[1] < 1:
            raise ValueError("reward series needs T >= 1 and d >= 1")
        object.__setattr__(self, "predicted", pred)
        object.__setattr__(self, "observed", obs)

    @property
    def residuals(self) -> np.ndarray:
        return self.observed - self.predicted

    def __len__(self) -> int:
        return self.predicted.shape[0]


@dataclass(frozen=True)
class LaplaceParams:
    b: float

    def __post_init__(self):
        if not self.b > 0:
            raise ValueError("Laplace scale must be positive")


def laplace_pdf(x, mu: float, b: float):
    if not b > 0:
        raise ValueError("Laplace scale must be positive")
    return np.exp(-np.abs(np.asarray(x, dtype=float) - mu) / b) / (2.0 * b)


def sequence_log_likelihood(series: RewardSeries, b: float) -> float:
    """log prod_t prod_j (1/2b) exp(-|r_tj - rhat_tj| / b)."""
    if not b > 0:
        raise ValueError("Laplace scale must be positive")
    abs_res = np.abs(series.residuals)
    return float(-abs_res.size * math.log(2.0 * b) - abs_res.sum() / b)


def estimate_scale_mle(series: RewardSeries, floor: float = DEFAULT_SCALE_FLOOR) -> LaplaceParams:
    """MLE of the scale: the mean absolute residual, floored away from zero."""
    b = float(np.mean(np.abs(series.residuals)))
    return LaplaceParams(b if b > 0 else floor)


def interquartile_range(values) -> float:
    q75, q25 = np.percentile(np.asarray(values, dtype=float), [75.0, 25.0])
    return float(q75 - q25)


def uncertainty_score(window: RewardSeries, candidate_rewards, lambda_spread: float = 0.5,
                      floor: float = DEFAULT_SCALE_FLOOR) -> float:
    """Laplace scale of recent residuals plus a spread penalty on current candidates."""
    b = estimate_scale_mle(window, floor).b
    spread = interquartile_range(candidate_rewards) if len(candidate_rewards) else 0.0
    return b + lambda_spread * spread


class ResidualWindow:
    """Rolling (predicted, observed) buffer owned by one episode runner."""

    def __init__(self, size: int):
        if size < 1:
            raise ValueError("window size must be >= 1")
        self._pred: deque = deque(maxlen=size)
        self._obs: deque = deque(maxlen=size)

    def push(self, predicted, observed) -> None:
        self._pred.append(np.asarray(predicted, dtype=float))
        self._obs.append(np.asarray(observed, dtype=float))

    def __len__(self) -> int:
        return len(self._pred)

    def series(self) -> RewardSeries | None:
        if not self._pred:
            return None
        return RewardSeries(np.stack(self._pred), np.stack(self._obs))
