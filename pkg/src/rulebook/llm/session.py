"""Chat sessions with persistent per-agent history."""
from __future__ import annotations

import hashlib
import json
import math
import uuid
from dataclasses import dataclass, field
from typing import Protocol

from .errors import ContextOverflowError, SessionStateError

MAX_CONTEXT_TOKENS = 16000


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def hash_messages(messages: list[dict]) -> str:
    return sha256_text(json.dumps(messages, ensure_ascii=False, separators=(",", ":")))


def estimate_tokens(text: str) -> int:
    # rough rule of thumb for English prose and code
    return math.ceil(len(text) / 4) + 4


class Backend(Protocol):
    tag: str

    def complete(self, messages: list[dict], session: "ChatSession") -> str:
        ...


@dataclass
class Turn:
    role: str  # "user" | "assistant"
    content: str

    def to_dict(self) -> dict:
        return {"role": self.role, "content": self.content}


@dataclass
class ChatSession:
    session_id: str
    system_prompt: str
    backend: Backend
    turns: list[Turn] = field(default_factory=list)
    max_context_tokens: int = MAX_CONTEXT_TOKENS
    agent: str = ""  # free-form label used in run logs (planner, builder, ...)

    @property
    def backend_tag(self) -> str:
        return self.backend.tag

    @property
    def pending(self) -> bool:
        """True when the last turn is a user turn still awaiting an answer."""
        return bool(self.turns) and self.turns[-1].role == "user"

    def add_user(self, content: str) -> None:
        if self.pending:
            raise SessionStateError("previous user turn has not been answered")
        self.turns.append(Turn("user", content))

    def add_assistant(self, content: str) -> None:
        if not self.pending:
            raise SessionStateError("assistant turn must follow a user turn")
        self.turns.append(Turn("assistant", content))

    def messages_for(self, message: str) -> list[dict]:
        """Messages sent for ``message``, dropping the oldest exchanges to fit the window."""
        system = {"role": "system", "content": self.system_prompt}
        user = {"role": "user", "content": message}
        history = [t.to_dict() for t in self.turns]
        fixed = estimate_tokens(self.system_prompt) + estimate_tokens(message)
        if fixed > self.max_context_tokens:
            raise ContextOverflowError(
                f"system prompt plus message need ~{fixed} tokens; limit is {self.max_context_tokens}")
        sizes = [estimate_tokens(m["content"]) for m in history]
        total = fixed + sum(sizes)
        start = 0
        while total > self.max_context_tokens and start < len(history):
            # drop a whole user/assistant pair so alternation is preserved
            total -= sizes[start] + sizes[start + 1]
            start += 2
        return [system, *history[start:], user]

    def send(self, message: str) -> str:
        if self.pending:
            raise SessionStateError("previous user turn has not been answered")
        messages = self.messages_for(message)
        reply = self.backend.complete(messages, self)
        self.turns.append(Turn("user", message))
        self.turns.append(Turn("assistant", reply))
        return reply

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "agent": self.agent,
            "backend": self.backend_tag,
            "system_prompt": self.system_prompt,
            "turns": [t.to_dict() for t in self.turns],
        }


def create_session(system_prompt: str, backend: Backend, *, session_id: str | None = None,
                   agent: str = "", max_context_tokens: int = MAX_CONTEXT_TOKENS) -> ChatSession:
    """New empty-history session. Pass ``session_id`` for reproducible runs."""
    return ChatSession(
        session_id=session_id or uuid.uuid4().hex,
        system_prompt=system_prompt,
        backend=backend,
        max_context_tokens=max_context_tokens,
        agent=agent,
    )


def send(session: ChatSession, message: str) -> str:
    return session.send(message)
