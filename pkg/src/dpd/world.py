"""Scenario representation, kinematic world stepping and BEV geometry queries.

Everything here is an immutable value.  Stepping returns a new
:class:`WorldState`; nothing is mutated in place, so states can be shared
freely between planners and threads.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

# Clearance reported when a world has no obstacles at all.
SENTINEL_DISTANCE = 1e6

_OVERLAP_EPS = 1e-9

SCENARIO_KEYS = (
    "dt",
    "horizon_steps",
    "ego_init",
    "agents",
    "lanes",
    "controls",
    "navigation_command",
    "expert_trajectory",
    "v_target",
)


class ScenarioError(ValueError):
    """Raised when a scenario file cannot be parsed or violates an invariant."""


def normalize_angle(angle: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    a = math.remainder(float(angle), 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    return a


def normalize_angles(angles: np.ndarray) -> np.ndarray:
    a = np.remainder(np.asarray(angles, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    return np.where(a <= -np.pi, a + 2.0 * np.pi, a)


class AgentKind(str, enum.Enum):
    VEHICLE = "vehicle"
    PEDESTRIAN = "pedestrian"
    CYCLIST = "cyclist"
    STATIC = "static"


class NavigationCommand(str, enum.Enum):
    LEFT = "left"
    STRAIGHT = "straight"
    RIGHT = "right"


class ControlKind(str, enum.Enum):
    RED_LIGHT = "red_light"
    GREEN_LIGHT = "green_light"
    STOP_SIGN = "stop_sign"
    YIELD_SIGN = "yield_sign"
    SPEED_LIMIT = "speed_limit"


_LIGHT_KINDS = (ControlKind.RED_LIGHT, ControlKind.GREEN_LIGHT)


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "yaw", normalize_angle(self.yaw))


@dataclass(frozen=True)
class AgentBox:
    """Oriented BEV box.  ``velocity`` is signed along ``pose.yaw``."""

    pose: Pose2D
    length: float
    width: float
    height: float = 1.5
    z: float = 0.0
    velocity: float = 0.0
    kind: AgentKind = AgentKind.VEHICLE

    def __post_init__(self):
        object.__setattr__(self, "kind", AgentKind(self.kind))
        if not (self.width > 0 and self.length >= self.width):
            raise ValueError(f"box needs length >= width > 0, got {self.length}x{self.width}")
        if not self.height > 0:
            raise ValueError(f"box height must be positive, got {self.height}")

    @classmethod
    def from_array7(cls, arr: Sequence[float], velocity: float = 0.0,
                    kind: AgentKind | str = AgentKind.VEHICLE) -> "AgentBox":
        x, y, z, length, width, height, yaw = (float(v) for v in arr)
        return cls(Pose2D(x, y, yaw), length, width, height, z, float(velocity), AgentKind(kind))

    def as_array7(self) -> list[float]:
        """(x, y, z, length, width, height, yaw)."""
        p = self.pose
        return [p.x, p.y, self.z, self.length, self.width, self.height, p.yaw]

    def with_pose(self, pose: Pose2D, velocity: float | None = None) -> "AgentBox":
        return replace(self, pose=pose, velocity=self.velocity if velocity is None else float(velocity))

    def corners(self) -> np.ndarray:
        return rectangle_corners(self.pose.x, self.pose.y, self.pose.yaw, self.length, self.width)


def rectangle_corners(x: float, y: float, yaw: float, length: float, width: float) -> np.ndarray:
    """Corners of an oriented rectangle in counter-clockwise order, shape (4, 2)."""
    c, s = math.cos(yaw), math.sin(yaw)
    hl, hw = 0.5 * length, 0.5 * width
    local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([x, y])


def _axes(corners: np.ndarray) -> np.ndarray:
    edges = np.roll(corners, -1, axis=0) - corners
    return np.stack([-edges[:, 1], edges[:, 0]], axis=1)[:2]


def polygons_overlap(a: np.ndarray, b: np.ndarray) -> bool:
    """Separating-axis test for two convex quads (touching counts as overlap).

    Degenerate rectangles (zero extent) are allowed; their zero-length edge
    normals project everything onto 0 and never separate.
    """
    for axis in np.concatenate([_axes(a), _axes(b)]):
        norm = math.hypot(axis[0], axis[1])
        if norm == 0.0:
            continue
        axis = axis / norm
        pa, pb = a @ axis, b @ axis
        if pa.max() < pb.min() - _OVERLAP_EPS or pb.max() < pa.min() - _OVERLAP_EPS:
            return False
    return True


def check_collision(a: AgentBox, b: AgentBox) -> bool:
    """True iff the BEV footprints of ``a`` and ``b`` overlap."""
    # cheap reject on circumscribed circles
    reach = 0.5 * (math.hypot(a.length, a.width) + math.hypot(b.length, b.width))
    if math.hypot(a.pose.x - b.pose.x, a.pose.y - b.pose.y) > reach + _OVERLAP_EPS:
        return False
    return polygons_overlap(a.corners(), b.corners())


def _box_arrays(boxes: Sequence[AgentBox]) -> np.ndarray:
    """(n, 5) array of x, y, yaw, length, width."""
    if not boxes:
        return np.zeros((0, 5))
    return np.array([[b.pose.x, b.pose.y, b.pose.yaw, b.length, b.width] for b in boxes])


def points_to_boxes_distance(points: np.ndarray, boxes: np.ndarray) -> np.ndarray:
    """Clearance from each point to each box boundary (0 inside).

    points: (m, 2); boxes: (n, 5) as produced by ``_box_arrays``.
    Returns an (m, n) array.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if boxes.shape[0] == 0:
        return np.zeros((points.shape[0], 0))
    dx = points[:, None, 0] - boxes[None, :, 0]
    dy = points[:, None, 1] - boxes[None, :, 1]
    c, s = np.cos(boxes[:, 2]), np.sin(boxes[:, 2])
    lx = dx * c + dy * s
    ly = -dx * s + dy * c
    ex = np.maximum(np.abs(lx) - 0.5 * boxes[:, 3], 0.0)
    ey = np.maximum(np.abs(ly) - 0.5 * boxes[:, 4], 0.0)
    return np.hypot(ex, ey)


@dataclass(frozen=True)
class LaneGeometry:
    centerline: tuple[tuple[float, float], ...]
    speed_limit: float

    def __post_init__(self):
        pts = tuple((float(x), float(y)) for x, y in self.centerline)
        object.__setattr__(self, "centerline", pts)
        if len(pts) < 2:
            raise ValueError("lane centerline needs at least 2 points")
        for p, q in zip(pts, pts[1:]):
            if p == q:
                raise ValueError(f"lane centerline has repeated point {p}")
        if not self.speed_limit > 0:
            raise ValueError("lane speed_limit must be positive")

    @cached_property
    def _segments(self):
        pts = np.array(self.centerline)
        a, b = pts[:-1], pts[1:]
        d = b - a
        seg_len = np.hypot(d[:, 0], d[:, 1])
        station0 = np.concatenate([[0.0], np.cumsum(seg_len)[:-1]])
        heading = np.arctan2(d[:, 1], d[:, 0])
        return a, d, seg_len, station0, heading

    @property
    def length(self) -> float:
        return float(self._segments[2].sum())

    def point_at(self, station: float) -> tuple[float, float]:
        """Centerline point at ``station``, extrapolated along the end segments."""
        a, d, seg_len, station0, _ = self._segments
        k = int(np.clip(np.searchsorted(station0, station, side="right") - 1, 0, len(seg_len) - 1))
        t = (station - station0[k]) / seg_len[k]
        return float(a[k, 0] + t * d[k, 0]), float(a[k, 1] + t * d[k, 1])

    def project(self, points: np.ndarray):
        """Project points onto the centerline.

        Returns (station, signed lateral offset, lane heading, distance), each
        of shape (m,).  Lateral offset is positive to the left of travel.
        """
        p = np.atleast_2d(np.asarray(points, dtype=float))
        a, d, seg_len, station0, heading = self._segments
        rel = p[:, None, :] - a[None, :, :]
        t = np.clip((rel * d[None]).sum(-1) / (seg_len ** 2)[None], 0.0, 1.0)
        foot = a[None] + t[..., None] * d[None]
        dist = np.hypot(p[:, None, 0] - foot[..., 0], p[:, None, 1] - foot[..., 1])
        k = np.argmin(dist, axis=1)
        rows = np.arange(p.shape[0])
        dk = d[k]
        relk = rel[rows, k]
        lateral = (dk[:, 0] * relk[:, 1] - dk[:, 1] * relk[:, 0]) / seg_len[k]
        station = station0[k] + t[rows, k] * seg_len[k]
        # extend stations beyond the end points so "past the line" stays monotone
        along = (relk * dk).sum(-1) / seg_len[k]
        station = np.where(k == 0, np.minimum(station, along), station)
        last = len(seg_len) - 1
        station = np.where(k == last, np.maximum(station, station0[last] + along), station)
        return station, lateral, heading[k], dist[rows, k]


def nearest_lanes(points: np.ndarray, headings: np.ndarray, lanes: Sequence[LaneGeometry]):
    """Pick a reference lane per point, preferring lanes aligned with the heading.

    Returns (lane index, station, lateral, lane heading, distance) arrays.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    headings = np.atleast_1d(np.asarray(headings, dtype=float))
    m = points.shape[0]
    if not lanes:
        z = np.zeros(m)
        return np.full(m, -1), z, z, headings.copy(), np.full(m, SENTINEL_DISTANCE)
    proj = [lane.project(points) for lane in lanes]
    dist = np.stack([pr[3] for pr in proj])
    head = np.stack([pr[2] for pr in proj])
    misaligned = np.abs(normalize_angles(head - headings[None])) > 0.5 * np.pi
    idx = np.argmin(dist + 1e3 * misaligned, axis=0)
    cols = np.arange(m)
    station = np.stack([pr[0] for pr in proj])[idx, cols]
    lateral = np.stack([pr[1] for pr in proj])[idx, cols]
    return idx, station, lateral, head[idx, cols], dist[idx, cols]


@dataclass(frozen=True)
class TrafficControl:
    """A sign or light.  ``schedule`` scripts light phases per tick."""

    kind: ControlKind
    position: tuple[float, float]
    applies_to_lane: int
    value: float | None = None
    schedule: tuple[ControlKind, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", ControlKind(self.kind))
        object.__setattr__(self, "position", (float(self.position[0]), float(self.position[1])))
        object.__setattr__(self, "schedule", tuple(ControlKind(k) for k in self.schedule))
        if self.kind is ControlKind.SPEED_LIMIT and not (self.value is not None and self.value > 0):
            raise ValueError("speed_limit control needs a positive value")
        for k in self.schedule:
            if k not in _LIGHT_KINDS:
                raise ValueError(f"schedule entries must be light phases, got {k.value}")

    def at_tick(self, tick: int) -> "TrafficControl":
        if not self.schedule:
            return self
        return replace(self, kind=self.schedule[min(tick, len(self.schedule) - 1)])


@dataclass(frozen=True)
class ConstantVelocity:
    speed: float


@dataclass(frozen=True)
class Script:
    """Poses for ticks 1..n; tick 0 is the agent's initial box."""

    poses: tuple[Pose2D, ...]


@dataclass(frozen=True)
class ScenarioAgent:
    box: AgentBox
    motion: ConstantVelocity | Script


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Waypoints (x, y, yaw, v) at t = dt, 2 dt, ...; ``origin`` is the t = 0 state."""

    states: np.ndarray
    dt: float
    origin: np.ndarray

    def __post_init__(self):
        states = np.array(self.states, dtype=float).reshape(-1, 4)
        origin = np.array(self.origin, dtype=float).reshape(4)
        if states.shape[0] < 1:
            raise ValueError("trajectory needs at least one waypoint")
        if not (np.all(np.isfinite(states)) and np.all(np.isfinite(origin))):
            raise ValueError("trajectory entries must be finite")
        if np.any(states[:, 3] < 0):
            raise ValueError("trajectory speeds must be non-negative")
        if not self.dt > 0:
            raise ValueError("trajectory dt must be positive")
        states.flags.writeable = False
        origin.flags.writeable = False
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "dt", float(self.dt))

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def xy(self) -> np.ndarray:
        return self.states[:, :2]

    @property
    def yaw(self) -> np.ndarray:
        return self.states[:, 2]

    @property
    def speed(self) -> np.ndarray:
        return self.states[:, 3]

    @property
    def duration(self) -> float:
        return len(self) * self.dt

    def with_origin(self) -> np.ndarray:
        return np.vstack([self.origin, self.states])

    def max_spacing(self) -> float:
        full = self.with_origin()[:, :2]
        return float(np.hypot(*np.diff(full, axis=0).T).max())

    def pose(self, k: int) -> Pose2D:
        x, y, yaw, _ = self.states[k]
        return Pose2D(x, y, yaw)

    def to_list(self) -> list[list[float]]:
        return self.states.tolist()

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (self.dt == other.dt and np.array_equal(self.states, other.states)
                and np.array_equal(self.origin, other.origin))

    __hash__ = None


@dataclass(frozen=True)
class Scenario:
    dt: float
    horizon_steps: int
    ego_init: AgentBox
    agents: tuple[ScenarioAgent, ...]
    lanes: tuple[LaneGeometry, ...]
    controls: tuple[TrafficControl, ...]
    navigation_command: NavigationCommand
    expert_trajectory: Trajectory
    v_target: float
    name: str = field(default="scenario", compare=False)

    def __post_init__(self):
        if not self.dt > 0:
            raise ScenarioError("dt: must be positive")
        if not (isinstance(self.horizon_steps, int) and self.horizon_steps > 0):
            raise ScenarioError("horizon_steps: must be a positive integer")
        if len(self.expert_trajectory) != self.horizon_steps:
            raise ScenarioError(
                f"expert_trajectory: length {len(self.expert_trajectory)} != horizon_steps {self.horizon_steps}")
        for i, agent in enumerate(self.agents):
            if isinstance(agent.motion, Script) and len(agent.motion.poses) < self.horizon_steps:
                raise ScenarioError(
                    f"agents[{i}].motion.script: {len(agent.motion.poses)} poses < horizon_steps {self.horizon_steps}")
        for i, c in enumerate(self.controls):
            if not 0 <= c.applies_to_lane < len(self.lanes):
                raise ScenarioError(f"controls[{i}].applies_to_lane: no lane {c.applies_to_lane}")
        if not self.v_target > 0:
            raise ScenarioError("v_target: must be positive")


@dataclass(frozen=True)
class WorldState:
    tick: int
    ego: AgentBox
    agents: tuple[AgentBox, ...]
    controls: tuple[TrafficControl, ...]

    @cached_property
    def agent_array(self) -> np.ndarray:
        """Agent boxes as the (n, 5) array used by distance queries."""
        return _box_arrays(self.agents)


# ---------------------------------------------------------------------------
# Scenario files
# ---------------------------------------------------------------------------

def _require(mapping: Mapping, key: str, ctx: str):
    if not isinstance(mapping, Mapping):
        raise ScenarioError(f"{ctx}: expected an object")
    if key not in mapping:
        raise ScenarioError(f"{ctx}.{key}: missing")
    return mapping[key]


def _floats(value, n: int | None, ctx: str) -> list[float]:
    if not isinstance(value, (list, tuple)) or (n is not None and len(value) != n):
        raise ScenarioError(f"{ctx}: expected a list of {n} numbers")
    try:
        out = [float(v) for v in value]
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{ctx}: {exc}") from None
    if not all(math.isfinite(v) for v in out):
        raise ScenarioError(f"{ctx}: non-finite value")
    return out


def _parse_box(entry, ctx: str, kind_default: str = "vehicle") -> AgentBox:
    box = _floats(_require(entry, "box", ctx), 7, f"{ctx}.box")
    kind = entry.get("kind", kind_default)
    velocity = float(entry.get("velocity", 0.0))
    try:
        return AgentBox.from_array7(box, velocity=velocity, kind=kind)
    except ValueError as exc:
        raise ScenarioError(f"{ctx}: {exc}") from None


def parse_scenario(data: Mapping[str, Any], name: str = "scenario") -> Scenario:
    """Build a :class:`Scenario` from decoded JSON, with field-level errors."""
    if not isinstance(data, Mapping):
        raise ScenarioError("top level: expected an object")
    keys = set(data)
    missing = [k for k in SCENARIO_KEYS if k not in keys]
    extra = sorted(keys - set(SCENARIO_KEYS))
    if missing:
        raise ScenarioError(f"missing top-level key(s): {', '.join(missing)}")
    if extra:
        raise ScenarioError(f"unknown top-level key(s): {', '.join(extra)}")

    dt = float(data["dt"])
    horizon = data["horizon_steps"]
    if not isinstance(horizon, int) or isinstance(horizon, bool):
        raise ScenarioError("horizon_steps: must be an integer")

    ego = _parse_box(data["ego_init"], "ego_init")

    agents = []
    for i, entry in enumerate(data["agents"]):
        ctx = f"agents[{i}]"
        box = _parse_box(entry, ctx)
        motion = _require(entry, "motion", ctx)
        if not isinstance(motion, Mapping) or len(motion) != 1:
            raise ScenarioError(f"{ctx}.motion: expected exactly one of constant_velocity | script")
        if "constant_velocity" in motion:
            v = float(motion["constant_velocity"])
            if v < 0:
                raise ScenarioError(f"{ctx}.motion.constant_velocity: must be >= 0")
            agents.append(ScenarioAgent(replace(box, velocity=v), ConstantVelocity(v)))
        elif "script" in motion:
            poses = tuple(Pose2D(*_floats(p, 3, f"{ctx}.motion.script[{j}]"))
                          for j, p in enumerate(motion["script"]))
            if not poses:
                raise ScenarioError(f"{ctx}.motion.script: empty")
            v0 = _scripted_speed(box.pose, poses[0], dt)
            agents.append(ScenarioAgent(replace(box, velocity=v0), Script(poses)))
        else:
            raise ScenarioError(f"{ctx}.motion: unknown motion {sorted(motion)}")

    lanes = []
    for i, entry in enumerate(data["lanes"]):
        ctx = f"lanes[{i}]"
        pts = _require(entry, "centerline", ctx)
        pts = [_floats(p, 2, f"{ctx}.centerline[{j}]") for j, p in enumerate(pts)]
        try:
            lanes.append(LaneGeometry(tuple(map(tuple, pts)), float(_require(entry, "speed_limit", ctx))))
        except ValueError as exc:
            raise ScenarioError(f"{ctx}: {exc}") from None

    controls = []
    for i, entry in enumerate(data["controls"]):
        ctx = f"controls[{i}]"
        try:
            controls.append(TrafficControl(
                kind=ControlKind(_require(entry, "kind", ctx)),
                position=tuple(_floats(_require(entry, "position", ctx), 2, f"{ctx}.position")),
                applies_to_lane=int(_require(entry, "applies_to_lane", ctx)),
                value=None if entry.get("value") is None else float(entry["value"]),
                schedule=tuple(entry.get("schedule", ())),
            ))
        except ValueError as exc:
            raise ScenarioError(f"{ctx}: {exc}") from None

    try:
        command = NavigationCommand(data["navigation_command"])
    except ValueError:
        raise ScenarioError(f"navigation_command: unknown command {data['navigation_command']!r}") from None

    rows = [_floats(r, 4, f"expert_trajectory[{j}]") for j, r in enumerate(data["expert_trajectory"])]
    if not rows:
        raise ScenarioError("expert_trajectory: empty")
    try:
        expert = Trajectory(np.array(rows), dt, [ego.pose.x, ego.pose.y, ego.pose.yaw, ego.velocity])
    except ValueError as exc:
        raise ScenarioError(f"expert_trajectory: {exc}") from None

    return Scenario(dt, horizon, ego, tuple(agents), tuple(lanes), tuple(controls), command,
                    expert, float(data["v_target"]), name=name)


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    try:
        return parse_scenario(data, name=path.stem)
    except ScenarioError as exc:
        raise ScenarioError(f"{path}: {exc}") from None


def scenario_to_dict(scenario: Scenario) -> dict:
    """Inverse of :func:`parse_scenario`."""

    def agent_entry(a: ScenarioAgent) -> dict:
        if isinstance(a.motion, ConstantVelocity):
            motion = {"constant_velocity": a.motion.speed}
        else:
            motion = {"script": [[p.x, p.y, p.yaw] for p in a.motion.poses]}
        return {"box": a.box.as_array7(), "kind": a.box.kind.value, "motion": motion}

    def control_entry(c: TrafficControl) -> dict:
        out = {"kind": c.kind.value, "position": list(c.position), "applies_to_lane": c.applies_to_lane}
        if c.value is not None:
            out["value"] = c.value
        if c.schedule:
            out["schedule"] = [k.value for k in c.schedule]
        return out

    return {
        "dt": scenario.dt,
        "horizon_steps": scenario.horizon_steps,
        "ego_init": {"box": scenario.ego_init.as_array7(), "velocity": scenario.ego_init.velocity},
        "agents": [agent_entry(a) for a in scenario.agents],
        "lanes": [{"centerline": [list(p) for p in lane.centerline], "speed_limit": lane.speed_limit}
                  for lane in scenario.lanes],
        "controls": [control_entry(c) for c in scenario.controls],
        "navigation_command": scenario.navigation_command.value,
        "expert_trajectory": scenario.expert_trajectory.to_list(),
        "v_target": scenario.v_target,
    }


# ---------------------------------------------------------------------------
# Stepping and prediction
# ---------------------------------------------------------------------------

def _scripted_speed(prev: Pose2D, cur: Pose2D, dt: float) -> float:
    dx, dy = cur.x - prev.x, cur.y - prev.y
    return abs(dx * math.cos(cur.yaw) + dy * math.sin(cur.yaw)) / dt


def _advance_cv(box: AgentBox, dt: float, steps: int = 1) -> AgentBox:
    if box.velocity == 0.0:
        return box
    d = box.velocity * dt * steps
    p = box.pose
    return box.with_pose(Pose2D(p.x + d * math.cos(p.yaw), p.y + d * math.sin(p.yaw), p.yaw))


def initial_state(scenario: Scenario) -> WorldState:
    return WorldState(
        tick=0,
        ego=scenario.ego_init,
        agents=tuple(a.box for a in scenario.agents),
        controls=tuple(c.at_tick(0) for c in scenario.controls),
    )


def step_world(state: WorldState, scenario: Scenario, ego: AgentBox | None = None) -> WorldState:
    """Advance agents and light phases by one tick.

    ``ego`` replaces the ego box (the planner's executed pose); by default the
    ego is carried over unchanged.
    """
    if state.tick >= scenario.horizon_steps:
        raise ValueError(f"cannot step past horizon ({scenario.horizon_steps} ticks)")
    tick = state.tick + 1
    agents = []
    for spec, box in zip(scenario.agents, state.agents):
        if isinstance(spec.motion, Script):
            pose = spec.motion.poses[tick - 1]
            prev = spec.box.pose if tick == 1 else spec.motion.poses[tick - 2]
            agents.append(box.with_pose(pose, _scripted_speed(prev, pose, scenario.dt)))
        else:
            agents.append(_advance_cv(box, scenario.dt))
    return WorldState(
        tick=tick,
        ego=state.ego if ego is None else ego,
        agents=tuple(agents),
        controls=tuple(c.at_tick(tick) for c in scenario.controls),
    )


def predict_states(state: WorldState, dt: float, n_steps: int) -> list[WorldState]:
    """Constant-velocity extrapolation of every agent for ticks +1..+n_steps.

    This is what a planner can know about the future: it never peeks at
    scripted tracks.
    """
    return [
        WorldState(state.tick + k, state.ego, tuple(_advance_cv(b, dt, k) for b in state.agents), state.controls)
        for k in range(1, n_steps + 1)
    ]


# ---------------------------------------------------------------------------
# Geometry queries
# ---------------------------------------------------------------------------

def distance_to_nearest_obstacle(ego_point: Sequence[float], state: WorldState) -> float:
    """Clearance from a point to the closest agent footprint; 0 inside a box."""
    if not state.agents:
        return SENTINEL_DISTANCE
    d = points_to_boxes_distance(np.asarray(ego_point, dtype=float)[None, :2], state.agent_array)
    return float(d.min())


def waypoint_clearances(xy: np.ndarray, states: Sequence[WorldState]) -> np.ndarray:
    """Per-waypoint clearance, waypoint k checked against ``states[k]``."""
    out = np.full(len(xy), SENTINEL_DISTANCE)
    for k, st in enumerate(states):
        if st.agents:
            out[k] = points_to_boxes_distance(xy[k:k + 1], st.agent_array).min()
    return out


def ego_lane_index(pose: Pose2D, lanes: Sequence[LaneGeometry]) -> int:
    if not lanes:
        return -1
    idx, *_ = nearest_lanes(np.array([[pose.x, pose.y]]), np.array([pose.yaw]), lanes)
    return int(idx[0])


def posted_limits(points: np.ndarray, headings: np.ndarray, lanes: Sequence[LaneGeometry],
                  controls: Sequence[TrafficControl], nearest=None) -> np.ndarray:
    """Speed limit in force at each point.

    The lane limit applies unless a speed_limit sign on that lane has been
    passed, in which case the most recently passed sign wins.
    """
    points = np.atleast_2d(points)
    idx, station, *_ = nearest or nearest_lanes(points, headings, lanes)
    limits = np.array([lanes[i].speed_limit if i >= 0 else np.inf for i in idx], dtype=float)
    sign_station = np.full(len(idx), -np.inf)
    for c in controls:
        if c.kind is not ControlKind.SPEED_LIMIT:
            continue
        s_sign = lanes[c.applies_to_lane].project(np.array([c.position]))[0][0]
        newer = (idx == c.applies_to_lane) & (station >= s_sign) & (s_sign > sign_station)
        limits = np.where(newer, c.value, limits)
        sign_station = np.where(newer, s_sign, sign_station)
    return limits


def controls_ahead(pose: Pose2D, lanes: Sequence[LaneGeometry], controls: Sequence[TrafficControl],
                   ego_lane: int | None = None) -> list[tuple[TrafficControl, float]]:
    """Controls governing the ego lane, with their distance ahead of ``pose``.

    Distance is measured along the lane from the pose station; negative means
    the control is behind.
    """
    lane_idx = ego_lane_index(pose, lanes) if ego_lane is None else ego_lane
    if lane_idx < 0:
        return []
    lane = lanes[lane_idx]
    s_ego = lane.project(np.array([[pose.x, pose.y]]))[0][0]
    out = []
    for c in controls:
        if c.applies_to_lane != lane_idx:
            continue
        s_c = lane.project(np.array([c.position]))[0][0]
        out.append((c, float(s_c - s_ego)))
    return out
