"""Deterministic rule-based reasoner.

Rule table (all geometry in the ego frame, x forward, y left):

=====================  =====================================================
bit                    set when
=====================  =====================================================
pedestrian_ahead       a pedestrian footprint, now or constant-velocity
                       predicted up to ``prediction_horizon`` s, overlaps the
                       forward corridor (``corridor_length`` x
                       2 ``corridor_half_width``)
vehicle_conflict       a moving vehicle/cyclist comes within
                       ``conflict_radius`` of a planned waypoint at the same
                       time, or crosses the ego heading at 45-135 deg within
                       ``crossing_range``
red_light              a red light governs the ego lane, front gap in
                       [-0.5, ``light_range``]
stop_sign              a stop sign governs the ego lane within ``sign_range``
yield_required         a yield sign governs the ego lane within ``sign_range``
lane_blocked           a non-pedestrian agent slower than ``blocked_speed``
                       overlaps the ego lane, ``blocked_length`` ahead and
                       within ``blocked_half_width`` of the centerline
                       (a heading-aligned box when no lanes are known)
speed_limit_exceeded   ego speed exceeds the posted limit by
                       ``speed_tolerance``
intersection_ahead     another lane crosses the ego lane (>= 30 deg) within
                       ``intersection_range`` ahead
=====================  =====================================================

Meta-actions follow a fixed priority: any stop condition (red light, stop
sign, pedestrian) gives [Stop, Wait]; otherwise a vehicle conflict or yield
sign gives [Yield, Decelerate]; a blocked lane adds a lane change; speeding
adds Decelerate; a turn command at an intersection appends Prepare_Turn.
With nothing active the plan is [Keep_Lane].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..world import (
    AgentBox,
    AgentKind,
    ControlKind,
    NavigationCommand,
    Pose2D,
    Trajectory,
    normalize_angle,
    points_to_boxes_distance,
    polygons_overlap,
    rectangle_corners,
)
from .prompts import AgentEntry, BevPrompt
from .schema import MAX_META_ACTIONS, MetaAction, PlanningState, ReasonerResponse


@dataclass(frozen=True)
class RuleParams:
    corridor_length: float = 20.0
    corridor_half_width: float = 2.0
    prediction_horizon: float = 2.0
    conflict_radius: float = 2.0
    crossing_range: float = 15.0
    light_range: float = 40.0
    sign_range: float = 30.0
    blocked_length: float = 30.0
    blocked_half_width: float = 1.5
    blocked_speed: float = 0.5
    moving_speed: float = 0.2
    speed_tolerance: float = 0.5
    intersection_range: float = 40.0
    intersection_min_angle: float = math.radians(30.0)


def forward_box(ego: AgentBox, length: float, half_width: float) -> np.ndarray:
    """Corners of the rectangle [0, length] x [-half_width, half_width] in the ego frame."""
    p = ego.pose
    cx = p.x + 0.5 * length * math.cos(p.yaw)
    cy = p.y + 0.5 * length * math.sin(p.yaw)
    return rectangle_corners(cx, cy, p.yaw, length, 2.0 * half_width)


def to_ego_frame(ego: AgentBox, x: float, y: float) -> tuple[float, float]:
    dx, dy = x - ego.pose.x, y - ego.pose.y
    c, s = math.cos(ego.pose.yaw), math.sin(ego.pose.yaw)
    return dx * c + dy * s, -dx * s + dy * c


def predicted_boxes(entry: AgentEntry, dt: float, horizon: float) -> list[AgentBox]:
    """The agent now and at each dt out to ``horizon`` under constant velocity."""
    box = entry.to_box()
    out = [box]
    n = int(round(horizon / dt))
    for k in range(1, n + 1):
        d = box.velocity * dt * k
        p = box.pose
        out.append(box.with_pose(Pose2D(p.x + d * math.cos(p.yaw), p.y + d * math.sin(p.yaw), p.yaw)))
    return out


def pedestrians_in_corridor(prompt: BevPrompt, params: RuleParams) -> list[tuple[AgentEntry, float]]:
    """Pedestrians hitting the forward corridor, with the nearest hit's longitudinal gap.

    The gap is the ego-frame x of the closest overlapping footprint corner,
    i.e. how far ahead the ego centre may travel before touching it.
    """
    ego = prompt.ego_box()
    corridor = forward_box(ego, params.corridor_length, params.corridor_half_width)
    hits = []
    for entry in prompt.agents:
        if entry.kind is not AgentKind.PEDESTRIAN:
            continue
        gaps = []
        for box in predicted_boxes(entry, prompt.dt, params.prediction_horizon):
            corners = box.corners()
            if polygons_overlap(corners, corridor):
                gaps.append(min(to_ego_frame(ego, cx, cy)[0] for cx, cy in corners))
        if gaps:
            hits.append((entry, min(gaps)))
    return hits


def _vehicle_conflict(prompt: BevPrompt, traj: Trajectory | None, params: RuleParams) -> bool:
    ego = prompt.ego_box()
    for entry in prompt.agents:
        if entry.kind not in (AgentKind.VEHICLE, AgentKind.CYCLIST) or abs(entry.velocity) <= params.moving_speed:
            continue
        box = entry.to_box()
        # crossing traffic nearby
        dx, dy = to_ego_frame(ego, box.pose.x, box.pose.y)
        rel = abs(normalize_angle(box.pose.yaw - ego.pose.yaw))
        if math.hypot(dx, dy) <= params.crossing_range and dx > -ego.length and \
                math.radians(45.0) <= rel <= math.radians(135.0):
            return True
        # time-aligned proximity along the plan
        if traj is not None:
            for k, (x, y) in enumerate(traj.xy):
                d = box.velocity * traj.dt * (k + 1)
                p = box.pose
                arr = np.array([[p.x + d * math.cos(p.yaw), p.y + d * math.sin(p.yaw), p.yaw,
                                 box.length, box.width]])
                if points_to_boxes_distance(np.array([[x, y]]), arr)[0, 0] < params.conflict_radius:
                    return True
    return False


def _lane_blocked(prompt: BevPrompt, params: RuleParams) -> bool:
    ego = prompt.ego_box()
    lane = prompt.lanes[prompt.ego_lane] if prompt.ego_lane >= 0 else None
    if lane is None:
        lane_box = forward_box(ego, params.blocked_length, params.blocked_half_width)
    else:
        # lane frame, so a yawed ego mid lane change still sees its own lane
        s_ego = float(lane.project(np.array([prompt.ego[:2]]))[0][0])
    for entry in prompt.agents:
        if entry.kind is AgentKind.PEDESTRIAN or abs(entry.velocity) >= params.blocked_speed:
            continue
        corners = entry.to_box().corners()
        if lane is None:
            if polygons_overlap(corners, lane_box):
                return True
            continue
        station, lateral, _, _ = lane.project(corners)
        if station.max() >= s_ego and station.min() <= s_ego + params.blocked_length \
                and lateral.min() <= params.blocked_half_width and lateral.max() >= -params.blocked_half_width:
            return True
    return False


def _governing(prompt: BevPrompt, kind: ControlKind, max_range: float) -> list[float]:
    """Front gaps to governing controls of ``kind`` that are still ahead."""
    half = 0.5 * prompt.ego[3]
    gaps = []
    for c in prompt.controls:
        if c.kind is kind and c.governs_ego and c.distance_ahead is not None:
            gap = c.distance_ahead - half
            if -0.5 <= gap <= max_range:
                gaps.append(gap)
    return gaps


def _posted_limit(prompt: BevPrompt) -> float:
    if prompt.ego_lane < 0:
        return math.inf
    limit = prompt.lanes[prompt.ego_lane].speed_limit
    passed = [(c.distance_ahead, c.value) for c in prompt.controls
              if c.kind is ControlKind.SPEED_LIMIT and c.governs_ego and c.distance_ahead is not None
              and c.distance_ahead <= 0.0]
    if passed:
        limit = max(passed)[1]
    return limit


def _segment_intersection(p, p2, q, q2):
    r = (p2[0] - p[0], p2[1] - p[1])
    s = (q2[0] - q[0], q2[1] - q[1])
    denom = r[0] * s[1] - r[1] * s[0]
    if abs(denom) < 1e-12:
        return None
    qp = (q[0] - p[0], q[1] - p[1])
    t = (qp[0] * s[1] - qp[1] * s[0]) / denom
    u = (qp[0] * r[1] - qp[1] * r[0]) / denom
    if -1e-9 <= t <= 1 + 1e-9 and -1e-9 <= u <= 1 + 1e-9:
        return t
    return None


def _intersection_ahead(prompt: BevPrompt, params: RuleParams) -> bool:
    if prompt.ego_lane < 0:
        return False
    lane = prompt.lanes[prompt.ego_lane]
    s_ego = lane.project(np.array([prompt.ego[:2]]))[0][0]
    pts = lane.centerline
    seg_start = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(np.array(pts), axis=0).T))])
    for j, other in enumerate(prompt.lanes):
        if j == prompt.ego_lane:
            continue
        for i in range(len(pts) - 1):
            a, b = pts[i], pts[i + 1]
            ha = math.atan2(b[1] - a[1], b[0] - a[0])
            for c, d in zip(other.centerline, other.centerline[1:]):
                t = _segment_intersection(a, b, c, d)
                if t is None:
                    continue
                hb = math.atan2(d[1] - c[1], d[0] - c[0])
                rel = abs(normalize_angle(hb - ha))
                if min(rel, math.pi - rel) < params.intersection_min_angle:
                    continue
                s_cross = seg_start[i] + t * math.hypot(b[0] - a[0], b[1] - a[1])
                if 0.0 < s_cross - s_ego <= params.intersection_range:
                    return True
    return False


def adjacent_lane_side(prompt: BevPrompt) -> str | None:
    """'left' / 'right' if a same-direction lane runs beside the ego lane."""
    ego = prompt.ego_box()
    pt = np.array([prompt.ego[:2]])
    sides = []
    for j, lane in enumerate(prompt.lanes):
        if j == prompt.ego_lane:
            continue
        _, lateral, heading, dist = (v[0] for v in lane.project(pt))
        if abs(normalize_angle(heading - ego.pose.yaw)) > math.radians(30.0) or dist > 6.0 or dist < 1.0:
            continue
        # lane lateral is measured from the lane; ego on its right means lane is on ego's left
        sides.append("left" if lateral < 0 else "right")
    if "left" in sides:
        return "left"
    if "right" in sides:
        return "right"
    return None


def planning_state(prompt: BevPrompt, traj: Trajectory | None = None,
                   params: RuleParams | None = None) -> PlanningState:
    params = params or RuleParams()
    return PlanningState.from_flags(
        pedestrian_ahead=bool(pedestrians_in_corridor(prompt, params)),
        vehicle_conflict=_vehicle_conflict(prompt, traj, params),
        red_light=bool(_governing(prompt, ControlKind.RED_LIGHT, params.light_range)),
        stop_sign=bool(_governing(prompt, ControlKind.STOP_SIGN, params.sign_range)),
        yield_required=bool(_governing(prompt, ControlKind.YIELD_SIGN, params.sign_range)),
        lane_blocked=_lane_blocked(prompt, params),
        speed_limit_exceeded=prompt.ego_velocity > _posted_limit(prompt) + params.speed_tolerance,
        intersection_ahead=_intersection_ahead(prompt, params),
    )


def meta_actions_for(state: PlanningState, command: NavigationCommand,
                     lane_change_side: str | None = "left") -> list[MetaAction]:
    actions: list[MetaAction] = []
    must_stop = state.red_light or state.stop_sign or state.pedestrian_ahead
    if must_stop:
        actions += [MetaAction.STOP, MetaAction.WAIT]
    elif state.vehicle_conflict or state.yield_required:
        actions += [MetaAction.YIELD, MetaAction.DECELERATE]
    if state.lane_blocked and not must_stop:
        actions.append(MetaAction.CHANGE_LANE_RIGHT if lane_change_side == "right"
                       else MetaAction.CHANGE_LANE_LEFT)
    if state.speed_limit_exceeded and not must_stop and MetaAction.DECELERATE not in actions:
        actions.append(MetaAction.DECELERATE)
    if state.intersection_ahead and command is not NavigationCommand.STRAIGHT:
        actions.append(MetaAction.PREPARE_TURN)
    if not actions:
        actions = [MetaAction.KEEP_LANE]
    return actions[:MAX_META_ACTIONS]


_PHRASES = {
    MetaAction.STOP: "Stop before the conflict point.",
    MetaAction.WAIT: "Wait until the way is clear.",
    MetaAction.YIELD: "Yield to the conflicting vehicle.",
    MetaAction.DECELERATE: "Reduce speed.",
    MetaAction.ACCELERATE: "Increase speed.",
    MetaAction.KEEP_LANE: "Keep the current lane.",
    MetaAction.CHANGE_LANE_LEFT: "Change to the left lane.",
    MetaAction.CHANGE_LANE_RIGHT: "Change to the right lane.",
    MetaAction.PREPARE_TURN: "Prepare to turn.",
}


def rule_based_reason(prompt: BevPrompt, traj: Trajectory | None = None,
                      params: RuleParams | None = None) -> ReasonerResponse:
    params = params or RuleParams()
    state = planning_state(prompt, traj, params)
    actions = meta_actions_for(state, prompt.navigation_command, adjacent_lane_side(prompt) or "left")
    kinds = sorted({a.kind.value for a in prompt.agents})
    signs = sorted({c.kind.value for c in prompt.controls if c.governs_ego})
    active = state.active()
    answers = {
        "scene": f"{len(prompt.agents)} agent(s), {len(prompt.lanes)} lane(s), command {prompt.navigation_command.value}.",
        "signs": ", ".join(signs) if signs else "none",
        "objects": ", ".join(kinds) if kinds else "none",
        "planning_state": ", ".join(active) if active else "none",
        "plan": ", ".join(a.value for a in actions),
    }
    return ReasonerResponse(state, tuple(actions), " ".join(_PHRASES[a] for a in actions), answers, source="rules")
