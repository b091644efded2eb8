"""Generator for the bundled scenarios.

The hazard suite has three families on straight roads, ego cruising east:

* ``ped_*``: a pedestrian stands beside the road, then walks across it.
  Standing still makes constant-velocity prediction blind to the crossing.
* ``red_*``: a red light before a junction with an unbroken stream of cross
  traffic; crossing the line means driving into that stream.
* ``blocked_*``: a stopped vehicle in the ego lane with a free lane to the left.

``intersection`` is the junction case used for the reasoning walkthrough:
red light, pedestrian on the crosswalk, a crossing vehicle and a left turn.

The JSON files under ``dpd/data/scenarios`` are produced by :func:`write_bundle`;
a test keeps them in sync with this module.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

DT = 0.5
HORIZON = 30
EGO_SPEED = 8.0
SPEED_LIMIT = 13.9
LANE_WIDTH = 3.5
EGO_DIMS = (4.5, 2.0, 1.5)
CAR_DIMS = (4.5, 2.0, 1.6)
PED_DIMS = (0.6, 0.6, 1.7)


def _box(x, y, yaw, dims) -> list[float]:
    length, width, height = dims
    return [float(x), float(y), 0.0, length, width, height, float(yaw)]


def _speed_schedule(n: int, v0: float, v_cruise: float, stop_at: float | None = None,
                    release_tick: int | None = None, a_acc: float = 2.0, a_dec: float = 3.0) -> list[float]:
    """Expert speeds per tick: cruise, brake to halt at station ``stop_at``, hold until ``release_tick``."""
    s, v, out = 0.0, v0, []
    for tick in range(1, n + 1):
        released = release_tick is not None and tick >= release_tick
        if stop_at is not None and not released:
            room = max(stop_at - s, 0.0)
            cap = math.sqrt(2.0 * a_dec * room)
            v = min(v + a_acc * DT, v_cruise, cap)
            if v < 0.05:
                v = 0.0
        else:
            v = min(v + a_acc * DT, v_cruise)
        s += v * DT
        out.append(v)
    return out


def _expert_rows(speeds, x0=0.0, lateral=lambda s: 0.0) -> list[list[float]]:
    rows, s = [], 0.0
    for v in speeds:
        s += v * DT
        y = lateral(s)
        slope = (lateral(s + 0.5) - lateral(s - 0.5))
        rows.append([x0 + s, y, math.atan2(slope, 1.0), v])
    return rows


def _ego(x=0.0, y=0.0, yaw=0.0, v=EGO_SPEED) -> dict:
    return {"box": _box(x, y, yaw, EGO_DIMS), "velocity": v}


def _straight_lane(y: float) -> dict:
    return {"centerline": [[-50.0, y], [250.0, y]], "speed_limit": SPEED_LIMIT}


def _scenario(ego, agents, lanes, controls, command, expert, v_target=EGO_SPEED) -> dict:
    return {
        "dt": DT,
        "horizon_steps": len(expert),
        "ego_init": ego,
        "agents": agents,
        "lanes": lanes,
        "controls": controls,
        "navigation_command": command,
        "expert_trajectory": expert,
        "v_target": v_target,
    }


@dataclass(frozen=True)
class PedestrianVariant:
    x: float
    side: float  # +1 starts left of the road, -1 right
    walk_speed: float
    start_tick: int


@dataclass(frozen=True)
class RedLightVariant:
    stop_line: float
    cross_speed: float
    spacing: float
    direction: float  # +1 cross traffic heads north, -1 south


@dataclass(frozen=True)
class BlockedVariant:
    x: float
    ego_speed: float


PEDESTRIAN_VARIANTS = (
    PedestrianVariant(30.0, 1.0, 1.5, 1),
    PedestrianVariant(34.0, -1.0, 1.4, 2),
    PedestrianVariant(38.0, 1.0, 1.6, 3),
    PedestrianVariant(42.0, -1.0, 1.5, 4),
    PedestrianVariant(46.0, 1.0, 1.3, 4),
    PedestrianVariant(50.0, -1.0, 1.7, 6),
    PedestrianVariant(36.0, 1.0, 1.2, 1),
)
RED_LIGHT_VARIANTS = (
    RedLightVariant(30.0, 8.0, 6.5, 1.0),
    RedLightVariant(36.0, 7.0, 6.0, -1.0),
    RedLightVariant(42.0, 8.0, 6.5, -1.0),
    RedLightVariant(48.0, 9.0, 7.0, 1.0),
    RedLightVariant(54.0, 7.5, 6.0, 1.0),
    RedLightVariant(60.0, 8.0, 6.5, -1.0),
    RedLightVariant(33.0, 8.5, 6.5, 1.0),
)
BLOCKED_VARIANTS = (
    BlockedVariant(35.0, 8.0),
    BlockedVariant(42.0, 8.0),
    BlockedVariant(50.0, 8.0),
    BlockedVariant(58.0, 7.0),
    BlockedVariant(66.0, 8.0),
    BlockedVariant(45.0, 6.0),
)

PED_START_OFFSET = 4.5


def pedestrian_scenario(v: PedestrianVariant) -> dict:
    y0 = v.side * PED_START_OFFSET
    yaw = -v.side * math.pi / 2
    poses, y = [], y0
    for tick in range(1, HORIZON + 1):
        if tick > v.start_tick and abs(y) <= PED_START_OFFSET + 1e-9:
            y -= v.side * v.walk_speed * DT
        poses.append([v.x, y, yaw])
    # expert waits short of the crossing until the pedestrian is clear of the road
    clear = next(t for t, p in enumerate(poses, 1) if -v.side * p[1] > LANE_WIDTH)
    speeds = _speed_schedule(HORIZON, EGO_SPEED, EGO_SPEED, stop_at=v.x - 8.0, release_tick=clear)
    agents = [{"box": _box(v.x, y0, yaw, PED_DIMS), "kind": "pedestrian", "motion": {"script": poses}}]
    return _scenario(_ego(), agents, [_straight_lane(0.0)], [], "straight", _expert_rows(speeds))


def red_light_scenario(v: RedLightVariant) -> dict:
    x_cross = v.stop_line + 6.0
    yaw = v.direction * math.pi / 2
    span = v.cross_speed * DT * HORIZON + 40.0
    n_cars = int(math.ceil(span / v.spacing)) + 1
    agents = []
    for j in range(n_cars):
        y = -v.direction * (j * v.spacing - 6.0)
        agents.append({"box": _box(x_cross, y, yaw, CAR_DIMS), "kind": "vehicle",
                       "motion": {"constant_velocity": v.cross_speed}})
    cross_lane = {"centerline": [[x_cross, -200.0 * v.direction], [x_cross, 200.0 * v.direction]],
                  "speed_limit": SPEED_LIMIT}
    controls = [{"kind": "red_light", "position": [v.stop_line, -0.5 * LANE_WIDTH], "applies_to_lane": 0}]
    speeds = _speed_schedule(HORIZON, EGO_SPEED, EGO_SPEED, stop_at=v.stop_line - 0.5 * EGO_DIMS[0] - 1.0)
    return _scenario(_ego(), agents, [_straight_lane(0.0), cross_lane], controls, "straight",
                     _expert_rows(speeds))


def blocked_scenario(v: BlockedVariant) -> dict:
    agents = [{"box": _box(v.x, 0.0, 0.0, CAR_DIMS), "kind": "vehicle", "motion": {"constant_velocity": 0.0}}]
    start, end = v.x - 28.0, v.x - 10.0

    def lateral(s: float) -> float:
        u = np.clip((s - start) / (end - start), 0.0, 1.0)
        return float(LANE_WIDTH * (3 * u ** 2 - 2 * u ** 3))

    speeds = _speed_schedule(HORIZON, v.ego_speed, v.ego_speed)
    return _scenario(_ego(v=v.ego_speed), agents, [_straight_lane(0.0), _straight_lane(LANE_WIDTH)], [],
                     "straight", _expert_rows(speeds, lateral=lateral), v_target=v.ego_speed)


def intersection_scenario() -> dict:
    """Ego heads north towards a junction, planning a left turn.

    A red light governs the ego lane, a pedestrian is on the crosswalk just
    beyond the stop line, and a vehicle approaches on the crossing road.
    """
    north = math.pi / 2
    v0 = 3.0
    agents = [
        {"box": _box(-1.0, 10.0, 0.0, PED_DIMS), "kind": "pedestrian",
         "motion": {"constant_velocity": 1.2}},
        {"box": _box(-7.0, 13.0, 0.0, CAR_DIMS), "kind": "vehicle",
         "motion": {"constant_velocity": 5.0}},
    ]
    lanes = [
        {"centerline": [[0.0, -50.0], [0.0, 80.0]], "speed_limit": SPEED_LIMIT},
        {"centerline": [[-80.0, 13.0], [80.0, 13.0]], "speed_limit": SPEED_LIMIT},
    ]
    controls = [{"kind": "red_light", "position": [0.5 * LANE_WIDTH, 8.0], "applies_to_lane": 0}]
    n = 20
    speeds = _speed_schedule(n, v0, v0, stop_at=8.0 - 0.5 * EGO_DIMS[0] - 1.0)
    rows, s = [], 0.0
    for v in speeds:
        s += v * DT
        rows.append([0.0, s, north, v])
    return _scenario(_ego(0.0, 0.0, north, v0), agents, lanes, controls, "left", rows, v_target=v0)


def hazard_suite() -> dict[str, dict]:
    out = {}
    for i, v in enumerate(PEDESTRIAN_VARIANTS):
        out[f"ped_{i:02d}"] = pedestrian_scenario(v)
    for i, v in enumerate(RED_LIGHT_VARIANTS):
        out[f"red_{i:02d}"] = red_light_scenario(v)
    for i, v in enumerate(BLOCKED_VARIANTS):
        out[f"blocked_{i:02d}"] = blocked_scenario(v)
    return out


def _dump(data: dict) -> str:
    return json.dumps(data, indent=1, sort_keys=True) + "\n"


def write_bundle(root: str | Path) -> list[Path]:
    """Write ``hazard/<name>.json`` and ``intersection.json`` under ``root``."""
    root = Path(root)
    (root / "hazard").mkdir(parents=True, exist_ok=True)
    written = []
    for name, data in hazard_suite().items():
        path = root / "hazard" / f"{name}.json"
        path.write_text(_dump(data), encoding="utf-8")
        written.append(path)
    path = root / "intersection.json"
    path.write_text(_dump(intersection_scenario()), encoding="utf-8")
    written.append(path)
    return written


def bundled_root() -> Path:
    return Path(str(resources.files("dpd") / "data" / "scenarios"))


def hazard_suite_dir() -> Path:
    return bundled_root() / "hazard"


def intersection_path() -> Path:
    return bundled_root() / "intersection.json"


if __name__ == "__main__":
    for p in write_bundle(bundled_root()):
        print(p)
