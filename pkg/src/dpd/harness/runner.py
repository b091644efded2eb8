"""Closed-loop episode runner.

Every tick: sample and score candidates, estimate uncertainty, arbitrate,
optionally consult the slow pathway and replan, execute the first waypoint of
the chosen trajectory, step the world.  Logs are line-delimited JSON with
sorted keys, so equal inputs give byte-identical files.
"""

from __future__ import annotations

import enum
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from ..arbitration import Pathway, PathwayDecision, Reason, decide, reward_distribution_check
from ..fast_pathway import generate_candidates
from ..fusion import EmbeddingTable, replan_full
from ..reward import score_candidates, select_top_k, total_reward
from ..slow_pathway.external import ExternalReasoner
from ..slow_pathway.prompts import build_bev_prompt, build_visual_prompt
from ..slow_pathway.rules import RuleParams, rule_based_reason
from ..slow_pathway.schema import ReasonerResponse
from ..uncertainty import ResidualWindow, uncertainty_score
from ..world import (
    ControlKind,
    Scenario,
    WorldState,
    check_collision,
    initial_state,
    predict_states,
    scenario_to_dict,
    step_world,
)
from .config import Config

LOG_SCHEMA_VERSION = "1"
# lateral reach of a light's stop line, measured from the lane centreline
STOP_LINE_HALF_WIDTH = 2.0


class Mode(str, enum.Enum):
    DUAL = "dual"
    FAST_ONLY = "fast_only"

    @classmethod
    def parse(cls, value) -> "Mode":
        if isinstance(value, Mode):
            return value
        return cls(str(value).replace("-", "_"))


class RuleReasoner:
    """In-process reasoner with the same interface as ExternalReasoner."""

    def __init__(self, params: RuleParams | None = None):
        self.params = params or RuleParams()

    def reason(self, prompt, visual, traj=None) -> ReasonerResponse:
        return rule_based_reason(prompt, traj, self.params)

    def close(self) -> None:
        pass


def make_reasoner(config: Config):
    if config.reasoner.kind == "rules":
        return RuleReasoner(config.rules)
    return ExternalReasoner(config.reasoner, config.rules)


@dataclass
class EpisodeLog:
    """Header, one record per simulated tick (append-only), summary."""

    header: dict[str, Any]
    records: list[dict[str, Any]] = field(default_factory=list)
    summary: dict[str, Any] | None = None
    # excluded from the serialized log to keep it deterministic
    wall_time: float = 0.0

    def append(self, record: dict[str, Any]) -> None:
        if self.summary is not None:
            raise RuntimeError("episode log is closed")
        if record["tick"] != len(self.records):
            raise ValueError(f"expected tick {len(self.records)}, got {record['tick']}")
        self.records.append(record)

    def lines(self) -> list[str]:
        rows = [{"record_type": "header", **self.header}]
        rows += [{"record_type": "tick", **r} for r in self.records]
        if self.summary is not None:
            rows.append({"record_type": "summary", **self.summary})
        return [json.dumps(r, sort_keys=True, separators=(",", ":"), allow_nan=False) for r in rows]

    def to_jsonl(self) -> str:
        return "\n".join(self.lines()) + "\n"

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_jsonl(), encoding="utf-8")
        return path

    @classmethod
    def from_jsonl(cls, text: str) -> "EpisodeLog":
        header, records, summary = None, [], None
        for n, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            row = json.loads(line)
            kind = row.pop("record_type", None)
            if kind == "header":
                header = row
            elif kind == "tick":
                records.append(row)
            elif kind == "summary":
                summary = row
            else:
                raise ValueError(f"line {n}: unknown record_type {kind!r}")
        if header is None:
            raise ValueError("log has no header record")
        return cls(header, records, summary)

    @classmethod
    def read(cls, path: str | Path) -> "EpisodeLog":
        return cls.from_jsonl(Path(path).read_text(encoding="utf-8"))

    @property
    def scenario_name(self) -> str:
        return self.header["scenario"]

    @property
    def mode(self) -> str:
        return self.header["mode"]


def _finite(x: float) -> float | None:
    return float(x) if math.isfinite(x) else None


def _red_light_crossings(prev: WorldState, cur: WorldState, scenario: Scenario) -> int:
    """Red lights whose stop line the ego front crossed between two ticks."""
    half = 0.5 * prev.ego.length
    pts = np.array([[prev.ego.pose.x, prev.ego.pose.y], [cur.ego.pose.x, cur.ego.pose.y]])
    count = 0
    for c in prev.controls:
        if c.kind is not ControlKind.RED_LIGHT:
            continue
        lane = scenario.lanes[c.applies_to_lane]
        s, lat, heading, _ = lane.project(pts)
        s_line = lane.project(np.array([c.position]))[0][0]
        aligned = math.cos(prev.ego.pose.yaw - heading[0]) > 0
        if aligned and abs(lat[0]) <= STOP_LINE_HALF_WIDTH and s[0] + half <= s_line < s[1] + half:
            count += 1
    return count


def run_episode(scenario: Scenario, config: Config | None = None, mode: Mode | str = Mode.DUAL,
                seed: int = 0, reasoner=None) -> EpisodeLog:
    config = config or Config()
    mode = Mode.parse(mode)
    kin, weights, arb, unc = config.kinematics, config.reward, config.arbitration, config.uncertainty
    table = EmbeddingTable.create(config.fusion.d_a, config.fusion.embedding_seed)
    own_reasoner = reasoner is None and mode is Mode.DUAL
    if own_reasoner:
        reasoner = make_reasoner(config)

    log = EpisodeLog(header={
        "schema_version": LOG_SCHEMA_VERSION,
        "scenario": scenario.name,
        "scenario_data": scenario_to_dict(scenario),
        "mode": mode.value,
        "seed": int(seed),
        "config": config.to_dict(),
        "config_digest": config.digest(),
    })
    started = time.perf_counter()
    window = ResidualWindow(unc.window)
    ego_token = np.zeros(table.d_a)
    cached: ReasonerResponse | None = None
    ticks_since_slow: int | None = None
    state = initial_state(scenario)
    colliding = [False] * len(scenario.agents)
    totals = {"slow_ticks": 0, "fallbacks": 0, "collision_events": 0, "red_light_violations": 0}

    try:
        for tick in range(scenario.horizon_steps):
            seq = predict_states(state, scenario.dt, kin.horizon_steps)
            cands = generate_candidates(state, scenario, kin.n_k, seed, kin)
            scores = score_candidates(cands, seq, weights, scenario.lanes)
            rewards = [b.reward for b in scores]
            best = select_top_k(cands, scores, 1)[0]
            series = window.series()
            u = math.inf if series is None else uncertainty_score(series, rewards, unc.lambda_spread,
                                                                  unc.scale_floor)
            flag = reward_distribution_check(rewards, arb)
            if mode is Mode.FAST_ONLY:
                decision = PathwayDecision(Pathway.FAST, Reason.FAST_ONLY_MODE)
            else:
                decision = decide(rewards[best], u, flag, arb, ticks_since_slow)

            response = None
            if decision.pathway is Pathway.SLOW:
                prompt = build_bev_prompt(state, scenario)
                visual = build_visual_prompt(cands[best].trajectory, state.ego, config.camera)
                response = reasoner.reason(prompt, visual, cands[best].trajectory)
                cached = response
                ticks_since_slow = 0
            elif decision.reason is Reason.COOLDOWN:
                response = cached

            if response is not None:
                result = replan_full(state, scenario, response, ego_token, table, weights, seed=seed,
                                     kinematics=kin, cfg=config.fusion, rules=config.rules)
                chosen, breakdown, used = result.trajectory, result.breakdown, result.weights
            else:
                chosen, breakdown, used = cands[best].trajectory, scores[best], weights

            pose, v = chosen.pose(0), float(chosen.speed[0])
            nxt = step_world(state, scenario, state.ego.with_pose(pose, velocity=v))
            obs_seq = [nxt] + predict_states(nxt, scenario.dt, kin.horizon_steps - 1)
            observed = total_reward(chosen, obs_seq, used, scenario.lanes)
            window.push(breakdown.vector(), observed.vector())

            hits = []
            for i, agent in enumerate(nxt.agents):
                now = check_collision(nxt.ego, agent)
                if now:
                    hits.append(i)
                    if not colliding[i]:
                        totals["collision_events"] += 1
                colliding[i] = now
            violations = _red_light_crossings(state, nxt, scenario)
            totals["red_light_violations"] += violations

            slow = decision.pathway is Pathway.SLOW
            totals["slow_ticks"] += slow
            fallback = slow and response.source == "fallback"
            totals["fallbacks"] += fallback
            log.append({
                "tick": tick,
                "pathway": decision.pathway.value,
                "reason": decision.reason.value,
                "best_reward": rewards[best],
                "uncertainty": _finite(u),
                "distribution_flag": flag,
                "chosen_reward": breakdown.reward,
                "predicted_costs": breakdown.vector().tolist(),
                "observed_costs": observed.vector().tolist(),
                "trajectory": chosen.to_list(),
                "feedback_applied": response is not None,
                "planning_state": response.planning_state.to_dict() if slow else None,
                "meta_actions": [a.value for a in response.meta_actions] if slow else None,
                "justification": response.justification if slow else None,
                "reasoner_source": response.source if slow else None,
                "fallback": fallback,
                "ego": nxt.ego.as_array7() + [nxt.ego.velocity],
                "agents": [a.as_array7() for a in nxt.agents],
                "collisions": hits,
                "red_light_violations": violations,
            })
            state = nxt
            if ticks_since_slow is not None:
                ticks_since_slow += 1
    finally:
        if own_reasoner:
            reasoner.close()

    n = len(log.records)
    log.summary = {
        "ticks": n,
        **totals,
        "slow_activation_rate": totals["slow_ticks"] / n if n else 0.0,
    }
    log.wall_time = time.perf_counter() - started
    return log
