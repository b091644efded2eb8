"""Fast/slow pathway switching."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence


class Pathway(str, enum.Enum):
    FAST = "Fast"
    SLOW = "Slow"


class Reason(str, enum.Enum):
    HIGH_REWARD_LOW_UNCERTAINTY = "HighRewardLowUncertainty"
    LOW_REWARD = "LowReward"
    HIGH_UNCERTAINTY = "HighUncertainty"
    UNIFORMLY_LOW_DISTRIBUTION = "UniformlyLowDistribution"
    COOLDOWN = "Cooldown"
    # fast-only evaluation mode; the arbiter is bypassed
    FAST_ONLY_MODE = "FastOnlyMode"


_FAST_REASONS = (Reason.HIGH_REWARD_LOW_UNCERTAINTY, Reason.COOLDOWN, Reason.FAST_ONLY_MODE)


@dataclass(frozen=True)
class SwitchConfig:
    tau_reward: float = -4.854829863897454
    tau_uncertainty: float = 6.372083301692616
    low_reward_quantile: float = 0.9
    slow_cooldown_ticks: int = 2
    eps_flat: float = 1e-3

    def __post_init__(self):
        if not self.tau_uncertainty > 0:
            raise ValueError("tau_uncertainty must be positive")
        if not 0 < self.low_reward_quantile <= 1:
            raise ValueError("low_reward_quantile must lie in (0, 1]")
        if self.slow_cooldown_ticks < 0:
            raise ValueError("slow_cooldown_ticks must be >= 0")


@dataclass(frozen=True)
class PathwayDecision:
    pathway: Pathway
    reason: Reason

    def __post_init__(self):
        if (self.pathway is Pathway.FAST) != (self.reason in _FAST_REASONS):
            raise ValueError(f"reason {self.reason.value} inconsistent with {self.pathway.value} pathway")


def reward_distribution_check(rewards: Sequence[float], cfg: SwitchConfig) -> bool:
    """Flag candidate sets that are uniformly low, or flat and below threshold.

    Uniformly low: at least a ``low_reward_quantile`` fraction of the
    rewards are below ``tau_reward``.
    """
    if len(rewards) == 0:
        raise ValueError("reward distribution check needs at least one reward")
    n = len(rewards)
    below = sum(1 for r in rewards if r < cfg.tau_reward)
    if below >= math.ceil(cfg.low_reward_quantile * n):
        return True
    hi, lo = max(rewards), min(rewards)
    return (hi - lo) < cfg.eps_flat and hi < cfg.tau_reward


def cooldown_active(ticks_since_slow: int | None, cfg: SwitchConfig) -> bool:
    return ticks_since_slow is not None and 1 <= ticks_since_slow <= cfg.slow_cooldown_ticks


def decide(best_reward: float, u: float, dist_flag: bool, cfg: SwitchConfig,
           ticks_since_slow: int | None = None) -> PathwayDecision:
    """Fast when the best candidate is good, certain and not flagged; else Slow.

    ``ticks_since_slow`` counts ticks since the last Slow tick (None when the
    slow pathway has not run yet).  Failing conditions are reported in the
    priority distribution flag > low reward > high uncertainty.
    """
    if u < 0:
        raise ValueError("uncertainty must be non-negative")
    if cooldown_active(ticks_since_slow, cfg):
        return PathwayDecision(Pathway.FAST, Reason.COOLDOWN)
    if dist_flag:
        return PathwayDecision(Pathway.SLOW, Reason.UNIFORMLY_LOW_DISTRIBUTION)
    if not best_reward > cfg.tau_reward:
        return PathwayDecision(Pathway.SLOW, Reason.LOW_REWARD)
    if not u < cfg.tau_uncertainty:
        return PathwayDecision(Pathway.SLOW, Reason.HIGH_UNCERTAINTY)
    return PathwayDecision(Pathway.FAST, Reason.HIGH_REWARD_LOW_UNCERTAINTY)
