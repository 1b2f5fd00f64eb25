"""Errors raised by chat sessions and backends."""
from __future__ import annotations


class LLMError(Exception):
    """Base class for backend and session failures."""


class SessionStateError(LLMError):
    """An operation would break user/assistant alternation."""


class RetriableError(LLMError):
    """Transient transport or server failure; the caller may retry."""


class BackendError(LLMError):
    """Hard failure after retries were exhausted (or a non-retriable status)."""


class ContextOverflowError(LLMError):
    """The prompt cannot fit the context window even after truncation."""


class ScriptExhaustedError(LLMError):
    """A scripted backend ran out of queued responses."""


class ScriptGuardError(LLMError):
    """A scripted response's guard did not match the prompt it was asked to answer."""

    def __init__(self, index: int, expected: str, prompt_excerpt: str):
        self.index = index
        self.expected = expected
        self.prompt_excerpt = prompt_excerpt
        super().__init__(
            f"scripted response #{index} expected the prompt to contain {expected!r}\n"
            f"--- prompt (last message) ---\n{prompt_excerpt}"
        )


class ReplayMissError(LLMError):
    """No recorded exchange matches the prompt hash."""

    def __init__(self, prompt_hash: str, index: int | None = None, detail: str = ""):
        self.prompt_hash = prompt_hash
        self.index = index
        where = "" if index is None else f" at exchange {index}"
        super().__init__(f"replay-miss{where}: no recorded response for prompt hash {prompt_hash}{detail}")


class ResponseFormatError(LLMError):
    """An agent response lacks a required structure (e.g. a code fence)."""


class ReplayIntegrityError(LLMError):
    """A recorded response does not match its recorded hash (the log was edited)."""

    def __init__(self, index: int, expected_hash: str, actual_hash: str):
        self.index = index
        super().__init__(
            f"replay log corrupted at exchange {index}: response hash {actual_hash} != recorded {expected_hash}")
