"""Switch-threshold calibration.

Run the fast pathway alone over a suite and take the 25th percentile of the
per-tick best reward as ``tau_reward`` and the 75th percentile of the
per-tick uncertainty as ``tau_uncertainty``.  Cold-start ticks (no residual
history yet, logged as null) are excluded.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Sequence

import numpy as np

from ..world import Scenario
from .config import Config
from .runner import Mode, run_episode

REWARD_PERCENTILE = 25.0
UNCERTAINTY_PERCENTILE = 75.0


def calibrate_thresholds(scenarios: Sequence[Scenario], config: Config | None = None,
                         seed: int = 0) -> tuple[float, float]:
    config = config or Config()
    rewards, uncertainties = [], []
    for scenario in scenarios:
        log = run_episode(scenario, config, Mode.FAST_ONLY, seed)
        for r in log.records:
            rewards.append(r["best_reward"])
            if r["uncertainty"] is not None:
                uncertainties.append(r["uncertainty"])
    if not rewards or not uncertainties:
        raise ValueError("calibration needs episodes with at least two ticks")
    tau_r = float(np.percentile(rewards, REWARD_PERCENTILE))
    tau_u = float(np.percentile(uncertainties, UNCERTAINTY_PERCENTILE))
    return tau_r, tau_u


def calibrated_config(scenarios: Sequence[Scenario], config: Config | None = None, seed: int = 0) -> Config:
    config = config or Config()
    tau_r, tau_u = calibrate_thresholds(scenarios, config, seed)
    return replace(config, arbitration=replace(config.arbitration, tau_reward=tau_r, tau_uncertainty=tau_u))
