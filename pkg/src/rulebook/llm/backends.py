"""Scripted, replay, recording and HTTP chat backends."""
from __future__ import annotations

import difflib
import time
from collections import deque
from dataclasses import asdict, dataclass
from typing import Callable, Iterable

import httpx

from .errors import (
    BackendError, ContextOverflowError, ReplayIntegrityError, ReplayMissError, RetriableError,
    ScriptExhaustedError, ScriptGuardError,
)
from .session import ChatSession, hash_messages, sha256_text

Responder = Callable[[list[dict], ChatSession], str]


@dataclass(frozen=True)
class ScriptedResponse:
    text: str
    guard: str | None = None  # substring the prompt must contain
    turn: int | None = None  # expected exchange number within the session (0-based)


class ScriptedBackend:
    """Serves queued responses in order; falls back to ``responder`` when the queue is empty."""

    tag = "scripted"

    def __init__(self, responses: Iterable[ScriptedResponse | str] = (), responder: Responder | None = None):
        self.queue: deque[ScriptedResponse] = deque(
            r if isinstance(r, ScriptedResponse) else ScriptedResponse(r) for r in responses)
        self.responder = responder
        self.served = 0

    def push(self, text: str, guard: str | None = None, turn: int | None = None) -> None:
        self.queue.append(ScriptedResponse(text, guard, turn))

    def complete(self, messages: list[dict], session: ChatSession) -> str:
        index = self.served
        self.served += 1
        if self.queue:
            item = self.queue.popleft()
            turn = len(session.turns) // 2
            if item.turn is not None and item.turn != turn:
                raise ScriptGuardError(index, f"<turn {item.turn}>", f"<actual turn {turn}>")
            if item.guard is not None:
                haystack = "\n".join(m["content"] for m in messages)
                if item.guard not in haystack:
                    last = messages[-1]["content"]
                    near = difflib.get_close_matches(item.guard, last.splitlines(), n=1, cutoff=0.0)
                    excerpt = last if not near else "\n".join(
                        difflib.unified_diff([item.guard], near, "expected", "closest line", lineterm=""))
                    raise ScriptGuardError(index, item.guard, excerpt)
            return item.text
        if self.responder is not None:
            return self.responder(messages, session)
        raise ScriptExhaustedError(f"no scripted response left for exchange {index}")


@dataclass(frozen=True)
class ExchangeRecord:
    index: int
    session_id: str
    agent: str
    system_hash: str
    prompt_hash: str
    response_hash: str
    response_text: str

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExchangeRecord":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__})


class RecordingBackend:
    """Wraps another backend and records every exchange with its hashes."""

    def __init__(self, inner, sink: Callable[[ExchangeRecord], None] | None = None, start_index: int = 0):
        self.inner = inner
        self.sink = sink
        self.records: list[ExchangeRecord] = []
        self.next_index = start_index

    @property
    def tag(self) -> str:
        return self.inner.tag

    def complete(self, messages: list[dict], session: ChatSession) -> str:
        text = self.inner.complete(messages, session)
        record = ExchangeRecord(
            index=self.next_index,
            session_id=session.session_id,
            agent=session.agent,
            system_hash=sha256_text(session.system_prompt),
            prompt_hash=hash_messages(messages),
            response_hash=sha256_text(text),
            response_text=text,
        )
        self.next_index += 1
        self.records.append(record)
        if self.sink is not None:
            self.sink(record)
        return text


class ReplayBackend:
    """Answers from recorded exchanges.

    In strict mode exchanges must arrive in recorded order, so the first
    divergent prompt is reported at its own index. Otherwise lookup is by
    prompt hash alone.
    """

    tag = "replay"

    def __init__(self, records: Iterable[ExchangeRecord], strict: bool = True):
        self.records = list(records)
        self.strict = strict
        self.position = 0
        self._by_hash: dict[str, deque[ExchangeRecord]] = {}
        for r in self.records:
            self._by_hash.setdefault(r.prompt_hash, deque()).append(r)

    def complete(self, messages: list[dict], session: ChatSession) -> str:
        prompt_hash = hash_messages(messages)
        if self.strict:
            if self.position >= len(self.records):
                raise ReplayMissError(prompt_hash, self.position, "; the log has no more exchanges")
            record = self.records[self.position]
            if record.prompt_hash != prompt_hash:
                raise ReplayMissError(prompt_hash, record.index, f"; recorded prompt hash is {record.prompt_hash}")
        else:
            bucket = self._by_hash.get(prompt_hash)
            if not bucket:
                raise ReplayMissError(prompt_hash)
            record = bucket.popleft()
        actual = sha256_text(record.response_text)
        if actual != record.response_hash:
            raise ReplayIntegrityError(record.index, record.response_hash, actual)
        self.position += 1
        return record.response_text


class HTTPBackend:
    """OpenAI-compatible chat-completions client with bounded retries."""

    tag = "http"
    RETRY_STATUS = {408, 409, 429, 500, 502, 503, 504}

    def __init__(self, base_url: str, model: str, api_key: str | None = None, *, temperature: float = 0,
                 max_retries: int = 3, timeout: float = 120.0, backoff: float = 1.0,
                 transport: httpx.BaseTransport | None = None, sleep: Callable[[float], None] = time.sleep):
        self.url = base_url.rstrip("/") + "/chat/completions"
        self.model = model
        self.api_key = api_key
        self.temperature = temperature
        self.max_retries = max_retries
        self.backoff = backoff
        self.sleep = sleep
        self.client = httpx.Client(timeout=timeout, transport=transport)

    def request_body(self, messages: list[dict]) -> dict:
        return {"model": self.model, "messages": messages, "temperature": self.temperature}

    def complete(self, messages: list[dict], session: ChatSession) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = self.request_body(messages)
        last: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                self.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = self.client.post(self.url, json=body, headers=headers)
            except httpx.TransportError as exc:
                last = RetriableError(f"transport error: {exc}")
                continue
            if resp.status_code == 200:
                try:
                    return resp.json()["choices"][0]["message"]["content"] or ""
                except (ValueError, KeyError, IndexError, TypeError) as exc:
                    raise BackendError(f"malformed completion response: {exc}") from None
            text = resp.text
            if resp.status_code in (400, 413) and "context" in text.lower():
                raise ContextOverflowError(f"endpoint rejected prompt as too long: {text[:200]}")
            if resp.status_code in self.RETRY_STATUS:
                last = RetriableError(f"HTTP {resp.status_code}: {text[:200]}")
                continue
            raise BackendError(f"HTTP {resp.status_code}: {text[:200]}")
        raise BackendError(f"giving up after {self.max_retries + 1} attempts: {last}")
