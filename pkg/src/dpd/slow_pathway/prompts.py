"""BEV and visual prompts handed to a reasoner."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from ..world import (
    AgentBox,
    AgentKind,
    ControlKind,
    LaneGeometry,
    NavigationCommand,
    Scenario,
    Trajectory,
    WorldState,
    controls_ahead,
    ego_lane_index,
)

_FRUSTUM_TOL = 1e-9


@dataclass(frozen=True)
class AgentEntry:
    box: tuple[float, ...]
    kind: AgentKind
    velocity: float
    distance: float

    def to_box(self) -> AgentBox:
        return AgentBox.from_array7(self.box, self.velocity, self.kind)


@dataclass(frozen=True)
class ControlEntry:
    kind: ControlKind
    position: tuple[float, float]
    applies_to_lane: int
    value: float | None
    governs_ego: bool
    distance_ahead: float | None


@dataclass(frozen=True)
class BevPrompt:
    tick: int
    ego: tuple[float, ...]
    ego_velocity: float
    agents: tuple[AgentEntry, ...]
    controls: tuple[ControlEntry, ...]
    navigation_command: NavigationCommand
    lanes: tuple[LaneGeometry, ...]
    ego_lane: int
    dt: float

    def ego_box(self) -> AgentBox:
        return AgentBox.from_array7(self.ego, self.ego_velocity)

    def to_dict(self) -> dict[str, Any]:
        return {
            "tick": self.tick,
            "ego": {"box": list(self.ego), "velocity": self.ego_velocity},
            "agents": [{"box": list(a.box), "kind": a.kind.value, "velocity": a.velocity,
                        "distance": a.distance} for a in self.agents],
            "controls": [{"kind": c.kind.value, "position": list(c.position),
                          "applies_to_lane": c.applies_to_lane, "value": c.value,
                          "governs_ego": c.governs_ego, "distance_ahead": c.distance_ahead}
                         for c in self.controls],
            "navigation_command": self.navigation_command.value,
            "lanes": [{"centerline": [list(p) for p in lane.centerline], "speed_limit": lane.speed_limit}
                      for lane in self.lanes],
            "ego_lane": self.ego_lane,
        }


@dataclass(frozen=True)
class CameraConfig:
    fov: float = math.radians(90.0)
    height: float = 1.5

    def __post_init__(self):
        if not 0 < self.fov < math.pi:
            raise ValueError("camera fov must lie in (0, pi)")
        if not self.height > 0:
            raise ValueError("camera height must be positive")


@dataclass(frozen=True)
class VisualPrompt:
    projected_waypoints: tuple[tuple[float, float], ...]
    waypoint_indices: tuple[int, ...]
    camera: CameraConfig

    def to_dict(self) -> dict[str, Any]:
        return {
            "projected_waypoints": [list(p) for p in self.projected_waypoints],
            "waypoint_indices": list(self.waypoint_indices),
            "camera": {"fov": self.camera.fov, "height": self.camera.height},
        }


def build_bev_prompt(state: WorldState, scenario: Scenario) -> BevPrompt:
    """Copy ego and agent boxes, nearest agent first."""
    ego = state.ego
    entries = []
    for i, a in enumerate(state.agents):
        d = math.hypot(a.pose.x - ego.pose.x, a.pose.y - ego.pose.y)
        entries.append((d, i, AgentEntry(tuple(a.as_array7()), a.kind, a.velocity, d)))
    entries.sort(key=lambda e: (e[0], e[1]))

    lane_idx = ego_lane_index(ego.pose, scenario.lanes)
    ahead = {id(c): d for c, d in controls_ahead(ego.pose, scenario.lanes, state.controls, lane_idx)}
    controls = tuple(
        ControlEntry(c.kind, c.position, c.applies_to_lane, c.value, id(c) in ahead, ahead.get(id(c)))
        for c in state.controls
    )
    return BevPrompt(
        tick=state.tick,
        ego=tuple(ego.as_array7()),
        ego_velocity=ego.velocity,
        agents=tuple(e[2] for e in entries),
        controls=controls,
        navigation_command=scenario.navigation_command,
        lanes=scenario.lanes,
        ego_lane=lane_idx,
        dt=scenario.dt,
    )


def project_point(dx: float, dy: float, yaw: float, camera: CameraConfig) -> tuple[float, float] | None:
    """Pinhole projection of a ground point given relative to the camera.

    The camera sits ``camera.height`` above the ego origin looking along
    ``yaw``; the image is square with normalized coordinates, u growing to
    the right and v growing downward.  Returns None outside the frustum.
    """
    forward = dx * math.cos(yaw) + dy * math.sin(yaw)
    left = -dx * math.sin(yaw) + dy * math.cos(yaw)
    if forward <= 0.0:
        return None
    f = 0.5 / math.tan(0.5 * camera.fov)
    u = 0.5 - f * left / forward
    v = 0.5 + f * camera.height / forward
    if not (-_FRUSTUM_TOL <= u <= 1 + _FRUSTUM_TOL and -_FRUSTUM_TOL <= v <= 1 + _FRUSTUM_TOL):
        return None
    return min(max(u, 0.0), 1.0), min(max(v, 0.0), 1.0)


def build_visual_prompt(traj: Trajectory, ego: AgentBox, camera: CameraConfig | None = None) -> VisualPrompt:
    camera = camera or CameraConfig()
    pts, idx = [], []
    for k, (x, y) in enumerate(np.asarray(traj.xy)):
        uv = project_point(x - ego.pose.x, y - ego.pose.y, ego.pose.yaw, camera)
        if uv is not None:
            pts.append(uv)
            idx.append(k)
    return VisualPrompt(tuple(pts), tuple(idx), camera)
