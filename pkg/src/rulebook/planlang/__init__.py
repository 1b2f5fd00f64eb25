"""The plan-script language: lexer, parser, interpreter and feedback rendering."""
from __future__ import annotations

from . import parser as _parser
from .interpreter import PlanRuntimeError, PlanSession, UserFunction, execute, get_object_with_id, run_source
from .lexer import ParseError, Token, tokenize
from .nodes import PlanAst, count_statements
from .parser import MAX_STATEMENTS, parse
from .trace import DONE_SUFFIX, ExecutionTrace, Terminal, TerminalKind, TraceEvent, format_feedback

GRAMMAR_EBNF = _parser.__doc__.split("::", 1)[1].strip("\n")

__all__ = [
    "DONE_SUFFIX", "ExecutionTrace", "GRAMMAR_EBNF", "MAX_STATEMENTS", "ParseError", "PlanAst",
    "PlanRuntimeError", "PlanSession", "Terminal", "TerminalKind", "Token", "TraceEvent", "UserFunction",
    "count_statements", "execute", "format_feedback", "get_object_with_id", "parse", "run_source", "tokenize",
]
