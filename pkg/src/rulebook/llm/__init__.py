"""Chat sessions, backends and response parsers."""
from __future__ import annotations

from .backends import (
    ExchangeRecord, HTTPBackend, RecordingBackend, ReplayBackend, ScriptedBackend, ScriptedResponse,
)
from .errors import (
    BackendError, ContextOverflowError, LLMError, ReplayIntegrityError, ReplayMissError, ResponseFormatError,
    RetriableError, ScriptExhaustedError, ScriptGuardError, SessionStateError,
)
from .parsing import (
    PlannerTurn, RuleOp, extract_code_blocks, first_code_block, normalize_epoch_ids, parse_planner_response,
    parse_rule_ops, render_rule_ops, rule_ids_in,
)
from .session import ChatSession, Turn, create_session, hash_messages, send, sha256_text

__all__ = [
    "BackendError", "ChatSession", "ContextOverflowError", "ExchangeRecord", "HTTPBackend", "LLMError",
    "PlannerTurn", "RecordingBackend", "ReplayBackend", "ReplayIntegrityError", "ReplayMissError",
    "ResponseFormatError", "RetriableError", "RuleOp", "ScriptExhaustedError", "ScriptGuardError",
    "ScriptedBackend", "ScriptedResponse", "SessionStateError", "Turn", "create_session", "extract_code_blocks",
    "first_code_block", "hash_messages", "normalize_epoch_ids", "parse_planner_response", "parse_rule_ops",
    "render_rule_ops", "rule_ids_in", "send", "sha256_text",
]
