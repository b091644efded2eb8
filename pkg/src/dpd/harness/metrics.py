"""Open-loop and closed-loop metrics computed from episode logs."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from ..world import AgentBox, LaneGeometry, Pose2D, Scenario, Trajectory, check_collision, parse_scenario
from .runner import EpisodeLog

HORIZONS_S = (1.0, 2.0, 3.0)
COLLISION_PENALTY = 0.5
RED_LIGHT_PENALTY = 0.7
_TIME_EPS = 1e-9


def _bucket_keys() -> list[str]:
    return [f"{h:g}s" for h in HORIZONS_S]


def _with_avg(values: Sequence[float]) -> dict[str, float]:
    out = dict(zip(_bucket_keys(), (float(v) for v in values)))
    out["avg"] = float(np.mean(values))
    return out


def _position_at(traj: Trajectory, t: float) -> np.ndarray:
    full = traj.with_origin()
    times = traj.dt * np.arange(len(full))
    return np.array([np.interp(t, times, full[:, 0]), np.interp(t, times, full[:, 1])])


def compute_l2(planned: Trajectory, expert: Trajectory) -> dict[str, float]:
    """L2 distance at 1, 2 and 3 s (linear interpolation between waypoints) and their mean."""
    need = HORIZONS_S[-1]
    for name, traj in (("planned", planned), ("expert", expert)):
        if traj.duration < need - _TIME_EPS:
            raise ValueError(f"{name} trajectory covers {traj.duration:g} s, need {need:g} s")
    return _with_avg([float(np.linalg.norm(_position_at(planned, t) - _position_at(expert, t)))
                      for t in HORIZONS_S])


def _scenario_of(log: EpisodeLog) -> Scenario:
    return parse_scenario(log.header["scenario_data"], log.scenario_name)


def _ego_states(log: EpisodeLog, scenario: Scenario) -> list[list[float]]:
    """Executed ego [x, y, yaw, v] at ticks 0..n."""
    e = scenario.ego_init
    out = [[e.pose.x, e.pose.y, e.pose.yaw, e.velocity]]
    for r in log.records:
        x, y, _, _, _, _, yaw, v = r["ego"]
        out.append([x, y, yaw, v])
    return out


def episode_l2(log: EpisodeLog, scenario: Scenario | None = None) -> dict[str, float]:
    """Mean L2 over planning ticks whose 3 s horizon fits inside the expert track."""
    scenario = scenario or _scenario_of(log)
    expert = scenario.expert_trajectory.with_origin()
    ego = _ego_states(log, scenario)
    dt = scenario.dt
    rows = []
    for t, r in enumerate(log.records):
        planned = Trajectory(np.array(r["trajectory"]), dt, ego[t])
        steps = len(planned)
        if t + steps >= len(expert) or planned.duration < HORIZONS_S[-1] - _TIME_EPS:
            continue
        ref = Trajectory(expert[t + 1:t + 1 + steps], dt, expert[t])
        rows.append([compute_l2(planned, ref)[k] for k in _bucket_keys()])
    if not rows:
        raise ValueError(f"{log.scenario_name}: no tick has a {HORIZONS_S[-1]:g} s expert horizon")
    return _with_avg(np.mean(rows, axis=0))


def _agent_boxes(row: Sequence[Sequence[float]]) -> list[AgentBox]:
    return [AgentBox.from_array7(a) for a in row]


def episode_collides(log: EpisodeLog, horizon_s: float, scenario: Scenario | None = None) -> bool:
    """Whether any planning tick's trajectory meets an actual agent box within ``horizon_s``."""
    scenario = scenario or _scenario_of(log)
    ego0 = scenario.ego_init
    n = len(log.records)
    for t, r in enumerate(log.records):
        for k, (x, y, yaw, _) in enumerate(r["trajectory"]):
            if (k + 1) * scenario.dt > horizon_s + _TIME_EPS or t + k >= n:
                break
            ego = ego0.with_pose(Pose2D(x, y, yaw))
            if any(check_collision(ego, a) for a in _agent_boxes(log.records[t + k]["agents"])):
                return True
    return False


def compute_collision_rate(logs: Sequence[EpisodeLog]) -> dict[str, float]:
    """Fraction of episodes with a collision inside each horizon bucket."""
    if not logs:
        raise ValueError("collision rate needs at least one log")
    per_bucket = []
    for h in HORIZONS_S:
        hits = [episode_collides(log, h, _scenario_of(log)) for log in logs]
        per_bucket.append(sum(hits) / len(logs))
    return _with_avg(per_bucket)


def route_completion(log: EpisodeLog, scenario: Scenario | None = None) -> float:
    """Progress of the final ego position along the expert route, in [0, 1]."""
    scenario = scenario or _scenario_of(log)
    pts = [tuple(p) for p in scenario.expert_trajectory.with_origin()[:, :2]]
    route = [pts[0]]
    for p in pts[1:]:
        if np.hypot(p[0] - route[-1][0], p[1] - route[-1][1]) > 1e-9:
            route.append(p)
    if len(route) < 2:
        return 1.0
    lane = LaneGeometry(tuple(route), 1.0)
    final = _ego_states(log, scenario)[-1]
    s = float(lane.project(np.array([final[:2]]))[0][0])
    return float(np.clip(s / lane.length, 0.0, 1.0))


def speed_at_stop_line(log: EpisodeLog, control_index: int, scenario: Scenario | None = None) -> float:
    """Executed speed at the tick the ego front came closest to a stop line without crossing it.

    Returns the speed of the first tick past the line if the very first state
    is already beyond it.
    """
    scenario = scenario or _scenario_of(log)
    control = scenario.controls[control_index]
    lane = scenario.lanes[control.applies_to_lane]
    s_line = float(lane.project(np.array([control.position]))[0][0])
    ego = np.array(_ego_states(log, scenario))
    front = lane.project(ego[:, :2])[0] + 0.5 * scenario.ego_init.length
    before = np.flatnonzero(front <= s_line)
    idx = int(before[np.argmax(front[before])]) if before.size else 0
    return float(ego[idx, 3])


@dataclass(frozen=True)
class MetricsReport:
    scenario: str
    mode: str
    seed: int
    l2: dict[str, float]
    collision_rate: dict[str, float]
    route_completion: float
    infraction_score: float
    driving_score: float
    slow_activation_rate: float
    collision_events: int
    red_light_violations: int
    wall_time: float = field(default=0.0, compare=False)

    def __post_init__(self):
        if abs(self.driving_score - self.route_completion * self.infraction_score) > 1e-12:
            raise ValueError("driving_score must equal route_completion x infraction_score")

    def to_dict(self, include_timing: bool = False) -> dict:
        d = asdict(self)
        if not include_timing:
            d.pop("wall_time")
        return d


def compute_driving_score(log: EpisodeLog, scenario: Scenario | None = None,
                          collision_penalty: float = COLLISION_PENALTY,
                          red_light_penalty: float = RED_LIGHT_PENALTY) -> dict:
    """RC, IS and DS = RC x IS, with one multiplicative penalty per infraction."""
    scenario = scenario or _scenario_of(log)
    rc = route_completion(log, scenario)
    collisions = sum(_rising_edges(log))
    violations = sum(r["red_light_violations"] for r in log.records)
    infraction = collision_penalty ** collisions * red_light_penalty ** violations
    return {
        "route_completion": rc,
        "infraction_score": infraction,
        "driving_score": rc * infraction,
        "collision_events": collisions,
        "red_light_violations": violations,
    }


def _rising_edges(log: EpisodeLog) -> list[int]:
    before: set[int] = set()
    counts = []
    for r in log.records:
        now = set(r["collisions"])
        counts.append(len(now - before))
        before = now
    return counts


def episode_report(log: EpisodeLog, scenario: Scenario | None = None) -> MetricsReport:
    scenario = scenario or _scenario_of(log)
    ds = compute_driving_score(log, scenario)
    n = len(log.records)
    slow = sum(r["pathway"] == "Slow" for r in log.records)
    return MetricsReport(
        scenario=log.scenario_name,
        mode=log.mode,
        seed=int(log.header["seed"]),
        l2=episode_l2(log, scenario),
        collision_rate=compute_collision_rate([log]),
        slow_activation_rate=slow / n if n else 0.0,
        wall_time=log.wall_time,
        **ds,
    )
