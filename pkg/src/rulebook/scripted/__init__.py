"""Scripted (offline, deterministic) model responses."""
from __future__ import annotations

from .household import SCOPES, TWO_PHRASE, full_program, household_backend, household_responder, parse_rule_listing

__all__ = ["SCOPES", "TWO_PHRASE", "full_program", "household_backend", "household_responder", "parse_rule_listing"]
