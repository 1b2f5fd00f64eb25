"""Execution traces and the feedback text the Planner sees after each cycle."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

DONE_SUFFIX = "This epoch is done. Succeed: True"


class TerminalKind(str, Enum):
    COMPLETED = "Completed"
    ASSERTION_FAILED = "AssertionFailed"
    RUNTIME_ERROR = "RuntimeError"
    BUDGET_EXHAUSTED = "BudgetExhausted"
    EPISODE_DONE = "EpisodeDone"

    @property
    def is_error(self) -> bool:
        return self in (TerminalKind.ASSERTION_FAILED, TerminalKind.RUNTIME_ERROR)


@dataclass(frozen=True)
class Terminal:
    kind: TerminalKind
    message: str = ""
    reward: int = 0
    line: int = 0

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "message": self.message, "reward": self.reward, "line": self.line}

    @classmethod
    def from_dict(cls, d: dict) -> "Terminal":
        return cls(TerminalKind(d["kind"]), d.get("message", ""), d.get("reward", 0), d.get("line", 0))


@dataclass(frozen=True)
class TraceEvent:
    index: int  # episode-global observation number
    call: str
    observation: str
    state_summary: str
    done: bool = False

    def render(self) -> str:
        line = f"obs_{self.index}: Act: {self.call}. Obs: {self.observation} {self.state_summary}"
        if self.done:
            line += f" {DONE_SUFFIX}"
        return line

    def to_dict(self) -> dict:
        return {
            "index": self.index, "call": self.call, "observation": self.observation,
            "state_summary": self.state_summary, "done": self.done,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TraceEvent":
        return cls(d["index"], d["call"], d["observation"], d["state_summary"], d.get("done", False))


class TraceClosedError(RuntimeError):
    pass


@dataclass
class ExecutionTrace:
    events: list[TraceEvent] = field(default_factory=list)
    terminal: Terminal | None = None
    final_state_summary: str = ""
    # indices of top-level plan items that started executing, in order
    executed_items: list[int] = field(default_factory=list)
    executed_source: str = ""

    def add_event(self, event: TraceEvent) -> None:
        if self.terminal is not None:
            raise TraceClosedError("trace already terminated")
        if self.events and event.index <= self.events[-1].index:
            raise ValueError("event indices must increase")
        self.events.append(event)

    def finish(self, terminal: Terminal, state_summary: str) -> None:
        if self.terminal is not None:
            raise TraceClosedError("trace already has a terminal")
        self.terminal = terminal
        self.final_state_summary = state_summary

    @property
    def is_error(self) -> bool:
        return self.terminal is not None and self.terminal.kind.is_error

    def to_dict(self) -> dict:
        return {
            "events": [e.to_dict() for e in self.events],
            "terminal": self.terminal.to_dict() if self.terminal else None,
            "final_state_summary": self.final_state_summary,
            "executed_items": list(self.executed_items),
            "executed_source": self.executed_source,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExecutionTrace":
        return cls(
            events=[TraceEvent.from_dict(e) for e in d["events"]],
            terminal=Terminal.from_dict(d["terminal"]) if d.get("terminal") else None,
            final_state_summary=d.get("final_state_summary", ""),
            executed_items=list(d.get("executed_items", [])),
            executed_source=d.get("executed_source", ""),
        )


def format_feedback(trace: ExecutionTrace) -> str:
    """Render a trace as the feedback block shown to the Planner."""
    lines = [e.render() for e in trace.events]
    term = trace.terminal
    if term is not None:
        if term.kind is TerminalKind.ASSERTION_FAILED:
            lines += ["Execution error:", term.message]
        elif term.kind is TerminalKind.RUNTIME_ERROR:
            msg = term.message if not term.line else f"{term.message} (line {term.line})"
            lines += ["Execution error:", msg]
        elif term.kind is TerminalKind.BUDGET_EXHAUSTED:
            lines.append(term.message or "The action budget for this episode is exhausted.")
    lines.append(f"Current state: {trace.final_state_summary}")
    return "\n".join(lines)
