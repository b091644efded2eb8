from .external import ExternalReasoner, ReasonerConfig, TransportError, build_request, external_reason
from .prompts import BevPrompt, CameraConfig, VisualPrompt, build_bev_prompt, build_visual_prompt
from .rules import RuleParams, meta_actions_for, planning_state, rule_based_reason
from .schema import (
    K,
    PLANNING_STATE_SCHEMA,
    QA_CATEGORIES,
    SCHEMA_VERSION,
    VOCABULARY,
    MetaAction,
    PlanningState,
    ReasonerResponse,
    ValidationError,
    validate_response,
)

__all__ = [
    "BevPrompt", "CameraConfig", "ExternalReasoner", "K", "MetaAction", "PLANNING_STATE_SCHEMA",
    "PlanningState", "QA_CATEGORIES", "ReasonerConfig", "ReasonerResponse", "RuleParams", "SCHEMA_VERSION",
    "TransportError", "VOCABULARY", "ValidationError", "VisualPrompt", "build_bev_prompt", "build_request",
    "build_visual_prompt", "external_reason", "meta_actions_for", "planning_state", "rule_based_reason",
    "validate_response",
]
