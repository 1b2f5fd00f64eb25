"""The rule system: typed rules with four attributes, an audit log and the trajectory archive."""
from __future__ import annotations

import copy
import json
import re
import textwrap
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable

from .llm.parsing import PlannerTurn, RuleOp, normalize_epoch_ids
from .planlang.trace import Terminal
from .textworld import TaskSpec

DEFAULT_N_MAX = 12
NO_RULES = "(no rules yet)"


class RuleType(str, Enum):
    SPECIAL_PHENOMENON = "Special Phenomenon"
    SPECIAL_MECHANISM = "Special Mechanism"
    USEFUL_HELPER_METHOD = "Useful Helper Method"
    SUCCESS_PROCESS = "Success Process"
    CORRECTED_ERROR = "Corrected Error"
    UNSOLVED_ERROR = "Unsolved Error"

    @classmethod
    def parse(cls, value: "str | RuleType") -> "RuleType":
        if isinstance(value, RuleType):
            return value
        key = re.sub(r"[^a-z]", "", str(value).lower())
        found = _TYPE_ALIASES.get(key)
        if found is None:
            raise ValueError(f"unknown rule type {value!r}")
        return found


_TYPE_ALIASES = {
    "specialphenomenon": RuleType.SPECIAL_PHENOMENON,
    "specialphenomena": RuleType.SPECIAL_PHENOMENON,
    # the Builder prompt offers one combined choice for both special types
    "specialphenomenamechanism": RuleType.SPECIAL_PHENOMENON,
    "specialphenomenonmechanism": RuleType.SPECIAL_PHENOMENON,
    "specialmechanism": RuleType.SPECIAL_MECHANISM,
    "specialmechanisms": RuleType.SPECIAL_MECHANISM,
    "usefulhelpermethod": RuleType.USEFUL_HELPER_METHOD,
    "helpermethod": RuleType.USEFUL_HELPER_METHOD,
    "successprocess": RuleType.SUCCESS_PROCESS,
    "correctederror": RuleType.CORRECTED_ERROR,
    "unsolvederror": RuleType.UNSOLVED_ERROR,
    "unresolvederror": RuleType.UNSOLVED_ERROR,
}


@dataclass
class Rule:
    rule_id: str
    rule_type: RuleType
    content: str
    example: str = ""
    validation_logs: str = ""

    @property
    def number(self) -> int:
        return int(self.rule_id.split("_")[1])

    def to_dict(self) -> dict:
        return {
            "rule_id": self.rule_id, "type": self.rule_type.value, "rule": self.content,
            "example": self.example, "validation_record": self.validation_logs,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Rule":
        return cls(d["rule_id"], RuleType.parse(d["type"]), d["rule"], d.get("example", ""),
                   d.get("validation_record", ""))

    def render(self, include_validation_logs: bool) -> str:
        lines = [f"**{self.rule_id}** (type: {self.rule_type.value})", f"rule: {self.content}"]
        if self.example.strip():
            lines.append("example:")
            lines.append(_indent(self.example))
        if include_validation_logs:
            lines.append(f"validation_record: {self.validation_logs}")
        return "\n".join(lines)


def _indent(text: str) -> str:
    return textwrap.indent(textwrap.dedent(text).strip("\n"), "    ")


# -- trajectories -----------------------------------------------------------

class Outcome(str, Enum):
    DIRECT_SUCCESS = "Direct Success"
    INDIRECT_SUCCESS = "Indirect Success"
    FAILURE = "Failure"

    @property
    def succeeded(self) -> bool:
        return self is not Outcome.FAILURE


@dataclass
class CycleRecord:
    response: str
    turn: PlannerTurn | None
    feedback: str
    terminal: Terminal
    format_error: bool = False
    actions: int = 0
    trace: dict | None = None

    @property
    def is_error(self) -> bool:
        return self.format_error or self.terminal.kind.is_error

    def to_dict(self) -> dict:
        return {
            "response": self.response,
            "turn": self.turn.to_dict() if self.turn else None,
            "feedback": self.feedback,
            "terminal": self.terminal.to_dict(),
            "format_error": self.format_error,
            "actions": self.actions,
            "trace": self.trace,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CycleRecord":
        return cls(
            response=d["response"],
            turn=PlannerTurn.from_dict(d["turn"]) if d.get("turn") else None,
            feedback=d["feedback"],
            terminal=Terminal.from_dict(d["terminal"]),
            format_error=d.get("format_error", False),
            actions=d.get("actions", 0),
            trace=d.get("trace"),
        )


@dataclass
class TrajectoryRecord:
    episode_id: str
    task: TaskSpec
    initial_observation: str
    cycles: list[CycleRecord] = field(default_factory=list)
    conclusion: str = ""
    outcome: Outcome | None = None
    reward: int = 0
    retrieved: str = ""

    @property
    def error_steps(self) -> int:
        return sum(1 for c in self.cycles if c.is_error)

    @property
    def actions(self) -> int:
        return sum(c.actions for c in self.cycles)

    def validate(self) -> list[str]:
        problems = []
        if not self.cycles:
            problems.append("no cycles")
        if not self.conclusion:
            problems.append("missing conclusion")
        if self.outcome is None:
            problems.append("missing outcome")
        elif (self.outcome is Outcome.FAILURE) != (self.reward == -1):
            problems.append("outcome inconsistent with reward")
        for i, c in enumerate(self.cycles):
            if not c.feedback:
                problems.append(f"cycle {i + 1} has no feedback")
            if not c.format_error and (c.turn is None or not c.turn.code):
                problems.append(f"cycle {i + 1} has no code")
        return problems

    def render(self, include_conclusion: bool = True) -> str:
        """Text form shown to the Builder and returned by get_trajectory."""
        parts = [
            f"## Trajectory of {self.episode_id}",
            "### Initial observation and the task:",
            self.initial_observation,
            f"Your task is to: {self.task.text}",
        ]
        for i, c in enumerate(self.cycles, 1):
            parts.append(f"### Planner (cycle {i}):")
            parts.append(c.response.strip() or "(empty response)")
            parts.append(f"### Feedback (cycle {i}):")
            parts.append(c.feedback)
        if include_conclusion and self.conclusion:
            parts.append("### Planner's conclusion:")
            parts.append(self.conclusion.strip())
        if self.outcome is not None:
            parts.append(f"### Result: {self.outcome.value} (reward {self.reward})")
        return "\n".join(parts)

    def to_dict(self) -> dict:
        return {
            "episode_id": self.episode_id,
            "task": self.task.to_record(),
            "initial_observation": self.initial_observation,
            "cycles": [c.to_dict() for c in self.cycles],
            "conclusion": self.conclusion,
            "outcome": self.outcome.value if self.outcome else None,
            "reward": self.reward,
            "retrieved": self.retrieved,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrajectoryRecord":
        return cls(
            episode_id=d["episode_id"],
            task=TaskSpec.from_record(d["task"]),
            initial_observation=d["initial_observation"],
            cycles=[CycleRecord.from_dict(c) for c in d["cycles"]],
            conclusion=d.get("conclusion", ""),
            outcome=Outcome(d["outcome"]) if d.get("outcome") else None,
            reward=d.get("reward", 0),
            retrieved=d.get("retrieved", ""),
        )


# -- the store --------------------------------------------------------------

@dataclass
class OpResult:
    op: RuleOp
    applied: bool
    reason: str | None = None
    rule_id: str | None = None
    output: str | None = None  # text returned to the agent (get_trajectory)

    def to_dict(self) -> dict:
        return {
            "op": self.op.to_dict(), "applied": self.applied, "reason": self.reason,
            "rule_id": self.rule_id,
        }


Policy = Callable[[RuleOp, "RuleStore"], "str | None"]

_ATTRS = ("rule", "type", "example", "validation_record")


class RuleStore:
    """Rule ids are issued sequentially and never reused."""

    def __init__(self) -> None:
        self.rules: dict[str, Rule] = {}
        self.next_id = 0
        self.archive: dict[str, TrajectoryRecord] = {}
        self.audit: list[dict] = []

    # -- queries ------------------------------------------------------------

    def __len__(self) -> int:
        return len(self.rules)

    def __contains__(self, rule_id: str) -> bool:
        return rule_id in self.rules

    def get(self, rule_id: str) -> Rule:
        return self.rules[rule_id]

    @property
    def ids(self) -> list[str]:
        return sorted(self.rules, key=lambda r: int(r.split("_")[1]))

    def ordered(self) -> list[Rule]:
        return [self.rules[i] for i in self.ids]

    def of_type(self, rule_type: RuleType) -> list[Rule]:
        return [r for r in self.ordered() if r.rule_type is rule_type]

    def over_capacity(self, n_max: int = DEFAULT_N_MAX) -> bool:
        return len(self.rules) > n_max

    def render_for_prompt(self, include_validation_logs: bool = False) -> str:
        if not self.rules:
            return NO_RULES
        return "\n\n".join(r.render(include_validation_logs) for r in self.ordered())

    def lint(self) -> list[tuple[str, str]]:
        """(rule_id, referenced id) pairs where a rule mentions a rule that no longer exists."""
        problems = []
        for r in self.ordered():
            for ref in sorted(set(re.findall(r"\brule_\d+\b", f"{r.content}\n{r.example}")),
                              key=lambda x: int(x.split("_")[1])):
                if ref not in self.rules:
                    problems.append((r.rule_id, ref))
        return problems

    # -- mutation -----------------------------------------------------------

    def _log(self, result: OpResult, episode_id: str | None, agent: str) -> OpResult:
        self.audit.append({
            "seq": len(self.audit),
            "episode_id": episode_id,
            "agent": agent,
            **result.to_dict(),
        })
        return result

    def write_rule(self, rule: str, type: str, example: str = "", validation_record: str = "", *,
                   episode_id: str | None = None, agent: str = "builder") -> OpResult:
        args = {"rule": rule, "type": type, "example": example, "validation_record": validation_record}
        return self.apply(RuleOp("write_rule", args), episode_id=episode_id, agent=agent)

    def update_rule(self, rule_id: str, rule: str | None = None, type: str | None = None,
                    example: str | None = None, validation_record: str | None = None, *,
                    episode_id: str | None = None, agent: str = "builder") -> OpResult:
        args = {"rule_id": rule_id}
        for k, v in (("rule", rule), ("type", type), ("example", example), ("validation_record", validation_record)):
            if v is not None:
                args[k] = v
        return self.apply(RuleOp("update_rule", args), episode_id=episode_id, agent=agent)

    def delete_rule(self, rule_id: str, *, episode_id: str | None = None, agent: str = "consolidator") -> OpResult:
        return self.apply(RuleOp("delete_rule", {"rule_id": rule_id}), episode_id=episode_id, agent=agent)

    def get_trajectory(self, epoch_ids) -> str:
        ids = normalize_epoch_ids(epoch_ids)
        if not ids:
            return "No epoch ids were given."
        chunks = []
        for eid in ids:
            rec = self.archive.get(eid)
            chunks.append(rec.render() if rec else f"{eid}: not found in the trajectory archive.")
        return "\n\n".join(chunks)

    def archive_trajectory(self, record: TrajectoryRecord) -> None:
        self.archive[record.episode_id] = record

    def apply(self, op: RuleOp, *, episode_id: str | None = None, agent: str = "builder",
              policy: Policy | None = None) -> OpResult:
        """Apply one op atomically; failures become logged rejections."""
        if op.error:
            return self._log(OpResult(op, False, op.error), episode_id, agent)
        if policy is not None:
            reason = policy(op, self)
            if reason:
                return self._log(OpResult(op, False, reason), episode_id, agent)
        handler = {
            "write_rule": self._apply_write, "update_rule": self._apply_update,
            "delete_rule": self._apply_delete, "get_trajectory": self._apply_get,
            "stop_generating": lambda o: OpResult(o, True),
        }.get(op.op)
        if handler is None:
            result = OpResult(op, False, f"unknown operation {op.op!r}")
        else:
            result = handler(op)
        return self._log(result, episode_id, agent)

    def _apply_write(self, op: RuleOp) -> OpResult:
        a = op.args
        content = str(a.get("rule", "")).strip()
        if not content:
            return OpResult(op, False, "write_rule requires non-empty rule content")
        try:
            rtype = RuleType.parse(a.get("type", ""))
        except ValueError as exc:
            return OpResult(op, False, str(exc))
        rule_id = f"rule_{self.next_id}"
        self.next_id += 1
        self.rules[rule_id] = Rule(rule_id, rtype, str(a.get("rule", "")), str(a.get("example", "")),
                                   str(a.get("validation_record", "")))
        return OpResult(op, True, rule_id=rule_id)

    def _apply_update(self, op: RuleOp) -> OpResult:
        a = op.args
        rule_id = a.get("rule_id", "")
        if rule_id not in self.rules:
            return OpResult(op, False, f"unknown rule id {rule_id!r}", rule_id=rule_id or None)
        # empty strings mean "not supplied", matching the prompt's signature defaults
        supplied = {k: a[k] for k in _ATTRS if k in a and str(a[k]) != ""}
        if not supplied:
            return OpResult(op, False, "update_rule with no attributes is a no-op", rule_id=rule_id)
        if "rule" in supplied and not str(supplied["rule"]).strip():
            return OpResult(op, False, "rule content cannot be blank", rule_id=rule_id)
        new_type = None
        if "type" in supplied:
            try:
                new_type = RuleType.parse(supplied["type"])
            except ValueError as exc:
                return OpResult(op, False, str(exc), rule_id=rule_id)
        r = self.rules[rule_id]
        if "rule" in supplied:
            r.content = str(supplied["rule"])
        if new_type is not None:
            r.rule_type = new_type
        if "example" in supplied:
            r.example = str(supplied["example"])
        if "validation_record" in supplied:
            r.validation_logs = str(supplied["validation_record"])
        return OpResult(op, True, rule_id=rule_id)

    def _apply_delete(self, op: RuleOp) -> OpResult:
        rule_id = op.args.get("rule_id", "")
        if rule_id not in self.rules:
            return OpResult(op, False, f"unknown rule id {rule_id!r}", rule_id=rule_id or None)
        del self.rules[rule_id]
        return OpResult(op, True, rule_id=rule_id)

    def _apply_get(self, op: RuleOp) -> OpResult:
        return OpResult(op, True, output=self.get_trajectory(op.args.get("epoch_ids", [])))

    # -- persistence --------------------------------------------------------

    def snapshot(self, include_archive: bool = False) -> dict:
        snap = {"next_id": self.next_id, "rules": [r.to_dict() for r in self.ordered()]}
        if include_archive:
            snap["archive"] = [rec.to_dict() for rec in self.archive.values()]
            snap["audit"] = copy.deepcopy(self.audit)
        return snap

    @classmethod
    def load(cls, snap: dict) -> "RuleStore":
        store = cls()
        for d in snap.get("rules", []):
            r = Rule.from_dict(d)
            store.rules[r.rule_id] = r
        store.next_id = snap.get("next_id", max((r.number + 1 for r in store.rules.values()), default=0))
        for d in snap.get("archive", []):
            rec = TrajectoryRecord.from_dict(d)
            store.archive[rec.episode_id] = rec
        store.audit = copy.deepcopy(snap.get("audit", []))
        return store

    def to_json(self) -> str:
        return json.dumps(self.snapshot(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def from_file(cls, path: str | Path) -> "RuleStore":
        return cls.load(json.loads(Path(path).read_text()))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RuleStore):
            return NotImplemented
        return self.snapshot() == other.snapshot()


def replay_audit(snapshot: dict, audit: Iterable[dict]) -> RuleStore:
    """Rebuild a store by re-applying the applied ops of an audit log to ``snapshot``."""
    store = RuleStore.load({k: v for k, v in snapshot.items() if k in ("rules", "next_id")})
    for entry in audit:
        if entry["applied"] and entry["op"]["op"] in ("write_rule", "update_rule", "delete_rule"):
            store.apply(RuleOp.from_dict(entry["op"]), episode_id=entry.get("episode_id"), agent=entry["agent"])
    return store


def initial_rules_path() -> Path:
    return Path(str(resources.files("rulebook") / "fixtures" / "initial_rules.json"))


def load_initial_rules() -> RuleStore:
    """Store seeded with the household rules derived from the Put demonstration."""
    data = json.loads(initial_rules_path().read_text())
    store = RuleStore()
    for entry in data:
        result = store.write_rule(entry["rule"], entry["type"], entry.get("example", ""),
                                  entry.get("validation_record", ""), episode_id=None, agent="user")
        assert result.applied and result.rule_id == entry["rule_id"], result
    store.audit.clear()
    return store
