"""Feedback from the slow pathway into trajectory selection.

Meta-actions are embedded, the ego token attends over them (single head,
identity projections) with a residual update, and planning-state bits
become hard constraints on the regenerated candidate set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .fast_pathway import CandidateSet, KinematicsConfig, generate_candidates
from .reward import RewardBreakdown, RewardWeights, score_candidates, select_top_k
from .slow_pathway.prompts import build_bev_prompt
from .slow_pathway.rules import RuleParams, pedestrians_in_corridor
from .slow_pathway.schema import VOCABULARY, MetaAction, PlanningState, ReasonerResponse
from .world import (
    ControlKind,
    LaneGeometry,
    Scenario,
    Trajectory,
    WorldState,
    controls_ahead,
    ego_lane_index,
    predict_states,
)

# Meta-actions whose embeddings define the "caution" direction.
_CAUTIOUS = (MetaAction.STOP, MetaAction.WAIT, MetaAction.YIELD, MetaAction.DECELERATE)


@dataclass(frozen=True)
class FusionConfig:
    d_a: int = 16
    embedding_seed: int = 0
    stop_speed: float = 0.5
    stop_margin: float = 0.5
    pedestrian_buffer: float = 2.0
    kappa_eps: float = 0.01
    replan_seed_offset: int = 7919
    min_v_target: float = 0.1


@dataclass(frozen=True, eq=False)
class EmbeddingTable:
    """Meta-action embeddings, one row per vocabulary entry."""

    e_a: np.ndarray

    def __post_init__(self):
        e = np.array(self.e_a, dtype=float)
        if e.ndim != 2 or e.shape[0] != len(VOCABULARY):
            raise ValueError(f"embedding table must have {len(VOCABULARY)} rows")
        if not np.all(np.isfinite(e)):
            raise ValueError("embedding rows must be finite")
        if len({row.tobytes() for row in e}) != e.shape[0]:
            raise ValueError("embedding rows must be distinct")
        e.flags.writeable = False
        object.__setattr__(self, "e_a", e)

    @classmethod
    def create(cls, d_a: int = 16, seed: int = 0) -> "EmbeddingTable":
        return cls(np.random.default_rng(seed).standard_normal((len(VOCABULARY), d_a)))

    @property
    def d_a(self) -> int:
        return self.e_a.shape[1]

    def row(self, action: MetaAction | str) -> np.ndarray:
        return self.e_a[VOCABULARY.index(MetaAction(action))]

    def safety_direction(self) -> np.ndarray:
        """Unit vector along the summed embeddings of the cautious actions."""
        v = sum(self.row(a) for a in _CAUTIOUS)
        return v / np.linalg.norm(v)


def encode_meta_actions(actions: Sequence[MetaAction | str], table: EmbeddingTable) -> np.ndarray:
    return np.stack([table.row(a) for a in actions]) if actions else np.zeros((0, table.d_a))


def attention_weights(query: np.ndarray, keys: np.ndarray) -> np.ndarray:
    query = np.asarray(query, dtype=float)
    keys = np.atleast_2d(np.asarray(keys, dtype=float))
    if keys.shape[0] == 0:
        raise ValueError("attention needs at least one key")
    if keys.shape[1] != query.shape[-1]:
        raise ValueError("query and key dimensions differ")
    logits = keys @ query / math.sqrt(query.shape[-1])
    logits = logits - logits.max()
    w = np.exp(logits)
    return w / w.sum()


def cross_attention(query: np.ndarray, keys: np.ndarray, values: np.ndarray) -> np.ndarray:
    """softmax(q K^T / sqrt(d)) V for a single query vector."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    w = attention_weights(query, keys)
    if values.shape[0] != w.shape[0]:
        raise ValueError("keys and values must have the same number of rows")
    return w @ values


def fuse_feedback(ego: np.ndarray, actions: Sequence[MetaAction | str], table: EmbeddingTable) -> np.ndarray:
    """Residual cross-attention update of the ego token."""
    if not actions:
        raise ValueError("fuse_feedback needs at least one meta-action")
    ego = np.asarray(ego, dtype=float)
    encoded = encode_meta_actions(actions, table)
    return cross_attention(ego, encoded, encoded) + ego


def modulated_alpha_safety(alpha_safety: float, ego_token: np.ndarray, table: EmbeddingTable) -> float:
    """alpha_safety * (1 + logistic(<ego', u_safe>))."""
    s = float(np.dot(ego_token, table.safety_direction()))
    return alpha_safety * (1.0 + 1.0 / (1.0 + math.exp(-s)))


def target_speed_for(actions: Sequence[MetaAction], v_target: float, cfg: FusionConfig,
                     v_max: float = math.inf) -> float:
    if MetaAction.STOP in actions or MetaAction.WAIT in actions:
        return cfg.min_v_target
    if MetaAction.YIELD in actions or MetaAction.DECELERATE in actions:
        return max(0.5 * v_target, cfg.min_v_target)
    if MetaAction.ACCELERATE in actions:
        return min(1.2 * v_target, v_max)
    return v_target


# ---------------------------------------------------------------------------
# Planning-state gating
# ---------------------------------------------------------------------------

def stop_limits(bits: PlanningState, state: WorldState, lanes: Sequence[LaneGeometry] = (),
                scenario: Scenario | None = None, cfg: FusionConfig | None = None,
                rules: RuleParams | None = None) -> tuple[float | None, float | None]:
    """Where the ego centre must stay behind, as (lane station limit, ego-frame x limit).

    The station limit comes from governing red lights / stop signs on the
    ego lane, the x limit from pedestrians in the forward corridor.  Either is
    None when no such target can be located.
    """
    cfg = cfg or FusionConfig()
    rules = rules or RuleParams()
    half = 0.5 * state.ego.length
    station_limit = None
    if (bits.red_light or bits.stop_sign) and lanes:
        wanted = set()
        if bits.red_light:
            wanted |= {ControlKind.RED_LIGHT}
        if bits.stop_sign:
            wanted |= {ControlKind.STOP_SIGN}
        lane_idx = ego_lane_index(state.ego.pose, lanes)
        lane = lanes[lane_idx]
        s_ego = lane.project(np.array([[state.ego.pose.x, state.ego.pose.y]]))[0][0]
        gaps = [d for c, d in controls_ahead(state.ego.pose, lanes, state.controls, lane_idx)
                if c.kind in wanted and d - half >= -0.5]
        if gaps:
            station_limit = s_ego + min(gaps) - half - cfg.stop_margin
    x_limit = None
    if bits.pedestrian_ahead and scenario is not None:
        hits = pedestrians_in_corridor(build_bev_prompt(state, scenario), rules)
        if hits:
            x_limit = min(gap for _, gap in hits) - half - cfg.pedestrian_buffer
    return station_limit, x_limit


def planning_state_mask(bits: PlanningState, candidates: CandidateSet, state: WorldState,
                        lanes: Sequence[LaneGeometry] = (), scenario: Scenario | None = None,
                        cfg: FusionConfig | None = None, rules: RuleParams | None = None) -> list[bool]:
    """Per-candidate compliance with the constraints implied by ``bits``."""
    cfg = cfg or FusionConfig()
    lanes = tuple(lanes) or (scenario.lanes if scenario is not None else ())
    must_stop = bits.red_light or bits.stop_sign or bits.pedestrian_ahead
    station_limit, x_limit = stop_limits(bits, state, lanes, scenario, cfg, rules) if must_stop else (None, None)
    lane = lanes[ego_lane_index(state.ego.pose, lanes)] if (station_limit is not None) else None
    ego = state.ego.pose
    c, s = math.cos(ego.yaw), math.sin(ego.yaw)
    keep = []
    for cand in candidates:
        traj = cand.trajectory
        ok = True
        if must_stop:
            ok = traj.speed[-1] <= cfg.stop_speed
            if ok and station_limit is not None:
                ok = bool(np.all(lane.project(traj.xy)[0] <= station_limit + 1e-9))
            if ok and x_limit is not None:
                x = (traj.xy[:, 0] - ego.x) * c + (traj.xy[:, 1] - ego.y) * s
                ok = bool(np.all(x <= max(x_limit, 0.0) + 1e-9))
        if ok and bits.lane_blocked:
            ok = cand.mean_abs_curvature >= cfg.kappa_eps
        keep.append(ok)
    return keep


def apply_planning_state(bits: PlanningState, candidates: CandidateSet, state: WorldState,
                         lanes: Sequence[LaneGeometry] = (), *, scenario: Scenario | None = None,
                         safety_costs: Sequence[float] | None = None, cfg: FusionConfig | None = None,
                         rules: RuleParams | None = None) -> CandidateSet:
    """Drop candidates violating active constraints; never returns an empty set.

    If nothing complies, the single candidate with the lowest safety cost is
    kept (``safety_costs`` aligned with ``candidates``; computed with default
    weights under constant-velocity prediction when omitted).
    """
    return candidates.subset(kept_indices(bits, candidates, state, lanes, scenario=scenario,
                                          safety_costs=safety_costs, cfg=cfg, rules=rules))


def kept_indices(bits: PlanningState, candidates: CandidateSet, state: WorldState,
                 lanes: Sequence[LaneGeometry] = (), *, scenario: Scenario | None = None,
                 safety_costs: Sequence[float] | None = None, cfg: FusionConfig | None = None,
                 rules: RuleParams | None = None) -> list[int]:
    if len(candidates) == 0:
        raise ValueError("apply_planning_state needs a non-empty candidate set")
    mask = planning_state_mask(bits, candidates, state, lanes, scenario, cfg, rules)
    kept = [i for i, ok in enumerate(mask) if ok]
    if kept:
        return kept
    if safety_costs is None:
        lanes = tuple(lanes) or (scenario.lanes if scenario is not None else ())
        n = len(candidates[0].trajectory)
        seq = predict_states(state, candidates[0].trajectory.dt, n)
        safety_costs = [b.c_safety for b in score_candidates(candidates, seq, RewardWeights(), lanes)]
    return [int(np.argmin(safety_costs))]


# ---------------------------------------------------------------------------
# Replanning
# ---------------------------------------------------------------------------

LANE_CHANGE_MAX_HEADING = math.radians(30.0)
LANE_CHANGE_DISTANCE = (1.0, 6.0)


def lane_change_target(actions: Sequence[MetaAction], state: WorldState,
                       lanes: Sequence[LaneGeometry]) -> int | None:
    """Index of the adjacent lane a Change_Lane action asks for, if one exists."""
    if MetaAction.CHANGE_LANE_LEFT in actions:
        side = 1.0
    elif MetaAction.CHANGE_LANE_RIGHT in actions:
        side = -1.0
    else:
        return None
    p = state.ego.pose
    best, best_dist = None, math.inf
    for i, lane in enumerate(lanes):
        _, lateral, heading, dist = (v[0] for v in lane.project(np.array([[p.x, p.y]])))
        if abs(math.remainder(heading - p.yaw, 2 * math.pi)) > LANE_CHANGE_MAX_HEADING:
            continue
        # a lane on the ego's left sees the ego on its right (negative lateral)
        if -side * lateral < LANE_CHANGE_DISTANCE[0] or dist > LANE_CHANGE_DISTANCE[1]:
            continue
        if dist < best_dist:
            best, best_dist = i, dist
    return best


@dataclass(frozen=True)
class ReplanResult:
    trajectory: Trajectory
    breakdown: RewardBreakdown
    ego_token: np.ndarray
    weights: RewardWeights
    candidates: CandidateSet
    kept: tuple[int, ...]
    chosen: int


def replan_full(state: WorldState, scenario: Scenario, response: ReasonerResponse, ego: np.ndarray,
                table: EmbeddingTable, weights: RewardWeights, *, seed: int = 0,
                kinematics: KinematicsConfig | None = None, cfg: FusionConfig | None = None,
                rules: RuleParams | None = None) -> ReplanResult:
    kinematics = kinematics or KinematicsConfig()
    cfg = cfg or FusionConfig()
    fused = fuse_feedback(ego, response.meta_actions, table)
    v_target = target_speed_for(response.meta_actions, weights.v_target, cfg, kinematics.v_max)
    new_weights = replace(weights, v_target=v_target)
    # feedback without any active condition carries nothing decision-relevant
    if response.planning_state.any():
        new_weights = replace(new_weights, alpha_safety=modulated_alpha_safety(weights.alpha_safety, fused, table))

    target = lane_change_target(response.meta_actions, state, scenario.lanes)
    candidates = generate_candidates(state, scenario, kinematics.n_k, seed + cfg.replan_seed_offset,
                                     kinematics, v_target=v_target, reference_lane=target)
    seq = predict_states(state, scenario.dt, kinematics.horizon_steps)
    score_lanes = scenario.lanes if target is None else (scenario.lanes[target],)
    scores = score_candidates(candidates, seq, new_weights, score_lanes)
    kept = kept_indices(response.planning_state, candidates, state, scenario.lanes, scenario=scenario,
                        safety_costs=[b.c_safety for b in scores], cfg=cfg, rules=rules)
    order = select_top_k(kept, [scores[i] for i in kept], 1)
    chosen = kept[order[0]]
    return ReplanResult(candidates[chosen].trajectory, scores[chosen], fused, new_weights, candidates,
                        tuple(kept), chosen)


def replan(state: WorldState, scenario: Scenario, response: ReasonerResponse, ego: np.ndarray,
           table: EmbeddingTable, weights: RewardWeights, **kw) -> tuple[Trajectory, RewardBreakdown]:
    r = replan_full(state, scenario, response, ego, table, weights, **kw)
    return r.trajectory, r.breakdown
