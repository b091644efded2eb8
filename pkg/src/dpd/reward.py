"""Multi-term trajectory cost and top-K selection.

Every component is a cost.  ``total_cost`` is the weighted sum of the four
groups (safety, comfort, efficiency, economic) and ``reward = -total_cost``,
so "highest reward" means "cheapest trajectory".
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Sequence

import numpy as np

from .world import (
    LaneGeometry,
    TrafficControl,
    Trajectory,
    WorldState,
    nearest_lanes,
    posted_limits,
    waypoint_clearances,
)


@dataclass(frozen=True)
class RewardWeights:
    alpha_safety: float = 2.0
    alpha_comfort: float = 1.0
    alpha_efficiency: float = 1.0
    alpha_economic: float = 1.0
    w_coll: float = 1.0
    w_dist: float = 1.0
    w_deviation: float = 1.0
    w_speed_safety: float = 1.0
    w_lat: float = 1.0
    w_lon: float = 1.0
    w_cent: float = 1.0
    w_speed_eff: float = 1.0
    w_time: float = 1.0
    sigma_coll: float = 2.0
    k_v: float = 0.1
    c_v: float = 0.1
    k_a: float = 0.1
    c_a: float = 0.1
    v_target: float = 8.0
    corridor_half_width: float = 1.5
    heading_lookahead: float = 10.0

    def __post_init__(self):
        if not self.sigma_coll > 0:
            raise ValueError("sigma_coll must be positive")
        if not self.corridor_half_width > 0:
            raise ValueError("corridor_half_width must be positive")

    @property
    def alphas(self) -> tuple[float, float, float, float]:
        return (self.alpha_safety, self.alpha_comfort, self.alpha_efficiency, self.alpha_economic)


@dataclass(frozen=True)
class RewardBreakdown:
    c_coll: float
    c_dist: float
    c_deviation: float
    c_speed_safety: float
    c_safety: float
    c_lat: float
    c_lon: float
    c_cent: float
    c_comfort: float
    c_speed_eff: float
    c_time: float
    c_efficiency: float
    c_economic: float
    total_cost: float
    reward: float
    alphas: tuple[float, float, float, float] = (2.0, 1.0, 1.0, 1.0)

    def vector(self) -> np.ndarray:
        """(safety, comfort, efficiency, economic) group costs."""
        return np.array([self.c_safety, self.c_comfort, self.c_efficiency, self.c_economic])

    def recompose(self, weights: RewardWeights | None = None) -> float:
        """Recompute total_cost from the stored parts.

        With ``weights`` the group costs are rebuilt from the leaf terms too.
        """
        if weights is None:
            groups = self.vector()
        else:
            groups = np.array([
                weights.w_coll * self.c_coll + weights.w_dist * self.c_dist
                + weights.w_deviation * self.c_deviation + weights.w_speed_safety * self.c_speed_safety,
                weights.w_lat * self.c_lat + weights.w_lon * self.c_lon + weights.w_cent * self.c_cent,
                weights.w_speed_eff * self.c_speed_eff + weights.w_time * self.c_time,
                self.c_economic,
            ])
        return float(np.dot(self.alphas, groups))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["alphas"] = list(self.alphas)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RewardBreakdown":
        kw = {f.name: d[f.name] for f in fields(cls) if f.name in d}
        kw["alphas"] = tuple(kw.get("alphas", (2.0, 1.0, 1.0, 1.0)))
        return cls(**kw)


# ---------------------------------------------------------------------------
# Finite-difference kinematics on waypoints
# ---------------------------------------------------------------------------

def longitudinal_accelerations(traj: Trajectory) -> np.ndarray:
    return np.diff(traj.speed) / traj.dt


def menger_curvature(xy: np.ndarray) -> np.ndarray:
    """Signed curvature of the circle through each interior triple of points."""
    p0, p1, p2 = xy[:-2], xy[1:-1], xy[2:]
    a, b = p1 - p0, p2 - p1
    cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    denom = np.hypot(*a.T) * np.hypot(*b.T) * np.hypot(*(p2 - p0).T)
    safe = np.where(denom > 1e-12, denom, 1.0)
    return np.where(denom > 1e-12, 2.0 * cross / safe, 0.0)


def lateral_accelerations(traj: Trajectory) -> np.ndarray:
    """Second difference of positions projected on the waypoint normal."""
    xy = traj.xy
    acc = (xy[2:] - 2.0 * xy[1:-1] + xy[:-2]) / traj.dt ** 2
    yaw = traj.yaw[1:-1]
    return -acc[:, 0] * np.sin(yaw) + acc[:, 1] * np.cos(yaw)


# ---------------------------------------------------------------------------
# Components
# ---------------------------------------------------------------------------

def collision_cost(traj: Trajectory, state_sequence: Sequence[WorldState], sigma_coll: float) -> float:
    """exp(-d_coll / sigma_coll) with d_coll the worst-case clearance over the horizon."""
    if len(state_sequence) != len(traj):
        raise ValueError("state_sequence must align with trajectory waypoints")
    d_coll = float(waypoint_clearances(traj.xy, state_sequence).min())
    return math.exp(-d_coll / sigma_coll)


def deviation_cost(traj: Trajectory, theta_target_per_step: Sequence[float]) -> float:
    theta_target = np.asarray(theta_target_per_step, dtype=float)
    if theta_target.shape != (len(traj),):
        raise ValueError(f"need {len(traj)} target headings, got {theta_target.shape}")
    return float(np.sum(1.0 - np.cos(traj.yaw - theta_target)))


def target_headings(traj: Trajectory, lanes: Sequence[LaneGeometry], lookahead: float = 10.0,
                    nearest=None) -> np.ndarray:
    """Lane heading at each waypoint, bent toward the centerline over ``lookahead`` metres.

    ``nearest`` optionally supplies a precomputed ``nearest_lanes`` result.
    """
    if not lanes:
        return traj.yaw.copy()
    _, _, lateral, heading, _ = nearest or nearest_lanes(traj.xy, traj.yaw, lanes)
    return heading - np.arctan2(lateral, lookahead)


def corridor_cost(traj: Trajectory, lanes: Sequence[LaneGeometry], half_width: float = 1.5,
                  nearest=None) -> float:
    """Mean normalized excursion beyond a lateral corridor around the nearest lane."""
    if not lanes:
        return 0.0
    _, _, lateral, _, _ = nearest or nearest_lanes(traj.xy, traj.yaw, lanes)
    return float(np.mean(np.maximum(np.abs(lateral) - half_width, 0.0) / half_width))


def speed_limit_cost(traj: Trajectory, lanes: Sequence[LaneGeometry],
                     controls: Sequence[TrafficControl] = (), nearest=None) -> float:
    if not lanes:
        return 0.0
    limits = posted_limits(traj.xy, traj.yaw, lanes, controls, nearest=nearest)
    return float(np.mean(np.maximum(traj.speed - limits, 0.0) / limits))


def safety_components(traj: Trajectory, state_sequence: Sequence[WorldState], weights: RewardWeights,
                      lanes: Sequence[LaneGeometry]) -> tuple[float, float, float, float]:
    controls = state_sequence[0].controls if state_sequence else ()
    nearest = nearest_lanes(traj.xy, traj.yaw, lanes) if lanes else None
    return (
        collision_cost(traj, state_sequence, weights.sigma_coll),
        corridor_cost(traj, lanes, weights.corridor_half_width, nearest),
        deviation_cost(traj, target_headings(traj, lanes, weights.heading_lookahead, nearest)),
        speed_limit_cost(traj, lanes, controls, nearest),
    )


def safety_cost(traj: Trajectory, state_sequence: Sequence[WorldState], weights: RewardWeights,
                lanes: Sequence[LaneGeometry]) -> float:
    c_coll, c_dist, c_dev, c_speed = safety_components(traj, state_sequence, weights, lanes)
    return (weights.w_coll * c_coll + weights.w_dist * c_dist
            + weights.w_deviation * c_dev + weights.w_speed_safety * c_speed)


def comfort_components(traj: Trajectory) -> tuple[float, float, float]:
    """(mean |a_lat|, mean |a_lon|, mean v^2 |kappa|)."""
    if len(traj) < 3:
        raise ValueError("comfort cost needs at least 3 waypoints")
    a_lat = lateral_accelerations(traj)
    a_lon = longitudinal_accelerations(traj)
    kappa = menger_curvature(traj.xy)
    v = traj.speed[1:-1]
    return (float(np.mean(np.abs(a_lat))), float(np.mean(np.abs(a_lon))),
            float(np.mean(v ** 2 * np.abs(kappa))))


def comfort_cost(traj: Trajectory, weights: RewardWeights | None = None) -> float:
    w = weights or RewardWeights()
    lat, lon, cent = comfort_components(traj)
    return w.w_lat * lat + w.w_lon * lon + w.w_cent * cent


def efficiency_components(traj: Trajectory, v_target: float) -> tuple[float, float]:
    if not v_target > 0:
        raise ValueError("v_target must be positive")
    return float(np.mean((traj.speed - v_target) ** 2)), len(traj) * traj.dt


def efficiency_cost(traj: Trajectory, v_target: float, weights: RewardWeights | None = None) -> float:
    w = weights or RewardWeights()
    speed, time = efficiency_components(traj, v_target)
    return w.w_speed_eff * speed + w.w_time * time


def economic_cost(traj: Trajectory, weights: RewardWeights) -> float:
    speed_term = float(np.mean(weights.k_v * traj.speed + weights.c_v))
    accel = longitudinal_accelerations(traj)
    accel_term = float(np.mean(weights.k_a * np.abs(accel) + weights.c_a)) if accel.size else weights.c_a
    return speed_term + accel_term


def total_reward(traj: Trajectory, state_sequence: Sequence[WorldState], weights: RewardWeights,
                 lanes: Sequence[LaneGeometry] = ()) -> RewardBreakdown:
    w = weights
    c_coll, c_dist, c_dev, c_speed = safety_components(traj, state_sequence, w, lanes)
    c_safety = w.w_coll * c_coll + w.w_dist * c_dist + w.w_deviation * c_dev + w.w_speed_safety * c_speed
    c_lat, c_lon, c_cent = comfort_components(traj)
    c_comfort = w.w_lat * c_lat + w.w_lon * c_lon + w.w_cent * c_cent
    c_speed_eff, c_time = efficiency_components(traj, w.v_target)
    c_efficiency = w.w_speed_eff * c_speed_eff + w.w_time * c_time
    c_economic = economic_cost(traj, w)
    total = (w.alpha_safety * c_safety + w.alpha_comfort * c_comfort
             + w.alpha_efficiency * c_efficiency + w.alpha_economic * c_economic)
    return RewardBreakdown(c_coll, c_dist, c_dev, c_speed, c_safety, c_lat, c_lon, c_cent, c_comfort,
                           c_speed_eff, c_time, c_efficiency, c_economic, total, -total, w.alphas)


def score_candidates(candidates, state_sequence: Sequence[WorldState], weights: RewardWeights,
                     lanes: Sequence[LaneGeometry] = ()) -> list[RewardBreakdown]:
    return [total_reward(c.trajectory, state_sequence, weights, lanes) for c in candidates]


def select_top_k(candidates, scores: Sequence, k: int) -> list[int]:
    """Indices of the ``k`` best candidates, best first.

    ``scores`` holds RewardBreakdowns (ties broken by lower safety cost, then
    lower index) or plain reward floats (ties broken by index).
    """
    n = len(candidates)
    if len(scores) != n:
        raise ValueError("one score per candidate required")
    if not 0 <= k <= n:
        raise ValueError(f"k={k} out of range for {n} candidates")
    if scores and isinstance(scores[0], RewardBreakdown):
        keys = [(-s.reward, s.c_safety, i) for i, s in enumerate(scores)]
    else:
        keys = [(-float(s), 0.0, i) for i, s in enumerate(scores)]
    return [key[2] for key in sorted(keys)[:k]]
