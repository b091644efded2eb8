"""Planning-state schema, meta-action vocabulary and response validation."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

SCHEMA_VERSION = "1"

PLANNING_STATE_SCHEMA = (
    "pedestrian_ahead",
    "vehicle_conflict",
    "red_light",
    "stop_sign",
    "yield_required",
    "lane_blocked",
    "speed_limit_exceeded",
    "intersection_ahead",
)
K = len(PLANNING_STATE_SCHEMA)

QA_CATEGORIES = ("scene", "signs", "objects", "planning_state", "plan")

MAX_META_ACTIONS = 4


class MetaAction(str, enum.Enum):
    STOP = "Stop"
    WAIT = "Wait"
    YIELD = "Yield"
    DECELERATE = "Decelerate"
    ACCELERATE = "Accelerate"
    KEEP_LANE = "Keep_Lane"
    CHANGE_LANE_LEFT = "Change_Lane_Left"
    CHANGE_LANE_RIGHT = "Change_Lane_Right"
    PREPARE_TURN = "Prepare_Turn"


VOCABULARY = tuple(MetaAction)


class ValidationError(ValueError):
    """Reasoner output that cannot be repaired into a valid response."""


@dataclass(frozen=True)
class PlanningState:
    bits: tuple[int, ...] = (0,) * K

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if len(bits) != K:
            raise ValueError(f"planning state needs {K} bits, got {len(bits)}")
        if any(b not in (0, 1) for b in bits):
            raise ValueError("planning state bits must be 0 or 1")
        object.__setattr__(self, "bits", bits)

    @classmethod
    def from_flags(cls, **flags: bool) -> "PlanningState":
        unknown = set(flags) - set(PLANNING_STATE_SCHEMA)
        if unknown:
            raise ValueError(f"unknown planning-state keys: {sorted(unknown)}")
        return cls(tuple(int(bool(flags.get(name, False))) for name in PLANNING_STATE_SCHEMA))

    def __getitem__(self, name: str) -> int:
        return self.bits[PLANNING_STATE_SCHEMA.index(name)]

    def __getattr__(self, name: str) -> int:
        if name in PLANNING_STATE_SCHEMA:
            return self.bits[PLANNING_STATE_SCHEMA.index(name)]
        raise AttributeError(name)

    def any(self) -> bool:
        return any(self.bits)

    def active(self) -> list[str]:
        return [n for n, b in zip(PLANNING_STATE_SCHEMA, self.bits) if b]

    def to_dict(self) -> dict[str, int]:
        return dict(zip(PLANNING_STATE_SCHEMA, self.bits))


@dataclass(frozen=True)
class ReasonerResponse:
    planning_state: PlanningState
    meta_actions: tuple[MetaAction, ...]
    justification: str = ""
    answers: Mapping[str, str] | None = field(default=None, compare=True)
    # "rules", "external" or "fallback"; not part of the wire format
    source: str = field(default="rules", compare=False)

    def __post_init__(self):
        actions = tuple(MetaAction(a) for a in self.meta_actions)
        if not 1 <= len(actions) <= MAX_META_ACTIONS:
            raise ValueError(f"need 1..{MAX_META_ACTIONS} meta-actions, got {len(actions)}")
        object.__setattr__(self, "meta_actions", actions)
        if self.answers is not None:
            object.__setattr__(self, "answers", dict(self.answers))

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "planning_state": self.planning_state.to_dict(),
            "meta_actions": [a.value for a in self.meta_actions],
            "justification": self.justification,
        }
        if self.answers is not None:
            out["answers"] = dict(self.answers)
        return out


def _bit(value, key: str) -> int:
    if isinstance(value, bool):
        return int(value)
    if isinstance(value, int) and value in (0, 1):
        return value
    if isinstance(value, float) and value in (0.0, 1.0):
        return int(value)
    raise ValidationError(f"planning_state.{key}: expected 0/1, got {value!r}")


def _parse_planning_state(raw) -> PlanningState:
    if isinstance(raw, PlanningState):
        return raw
    if isinstance(raw, Mapping):
        missing = [k for k in PLANNING_STATE_SCHEMA if k not in raw]
        if missing:
            raise ValidationError(f"planning_state: missing key(s) {', '.join(missing)}")
        return PlanningState(tuple(_bit(raw[k], k) for k in PLANNING_STATE_SCHEMA))
    if isinstance(raw, Sequence) and not isinstance(raw, (str, bytes)):
        if len(raw) != K:
            raise ValidationError(f"planning_state: expected {K} bits, got {len(raw)}")
        return PlanningState(tuple(_bit(v, PLANNING_STATE_SCHEMA[i]) for i, v in enumerate(raw)))
    raise ValidationError("planning_state: expected a named map or a bit list")


def validate_response(raw) -> ReasonerResponse:
    """Repair reasoner output into a canonical :class:`ReasonerResponse`.

    Extra meta-actions beyond four are dropped, unknown top-level keys and
    malformed optional fields are discarded.  A missing or malformed planning
    state, unknown meta-action tokens or an empty action list raise
    :class:`ValidationError`.  Idempotent.
    """
    if isinstance(raw, ReasonerResponse):
        source = raw.source
        raw = raw.to_dict()
    else:
        source = "external"
    if not isinstance(raw, Mapping):
        raise ValidationError("response: expected a JSON object")
    if "planning_state" not in raw:
        raise ValidationError("response: missing planning_state")
    state = _parse_planning_state(raw["planning_state"])

    actions_raw = raw.get("meta_actions")
    if not isinstance(actions_raw, Sequence) or isinstance(actions_raw, (str, bytes)):
        raise ValidationError("meta_actions: expected a list")
    actions_raw = list(actions_raw)[:MAX_META_ACTIONS]
    if not actions_raw:
        raise ValidationError("meta_actions: empty")
    actions = []
    for token in actions_raw:
        try:
            actions.append(MetaAction(token))
        except ValueError:
            raise ValidationError(f"meta_actions: unknown token {token!r}") from None

    justification = raw.get("justification", "")
    if not isinstance(justification, str):
        justification = ""

    answers = raw.get("answers")
    if isinstance(answers, Mapping):
        answers = {k: v for k, v in answers.items() if k in QA_CATEGORIES and isinstance(v, str)}
    else:
        answers = None

    return ReasonerResponse(state, tuple(actions), justification, answers, source=source)
