"""The Builder (case classification and rule management) and the Consolidator."""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from enum import Enum

from . import prompts
from .llm import ChatSession, RuleOp, parse_rule_ops
from .rulestore import DEFAULT_N_MAX, OpResult, Outcome, RuleStore, RuleType, TrajectoryRecord

log = logging.getLogger(__name__)

DEFAULT_OP_BUDGET = 5
RULES_TOKEN = "*Imperfect Rules*"
AGENT_TOKEN = "*Imperfect Agent*"


class Fault(str, Enum):
    IMPERFECT_RULES = "Imperfect Rules"
    IMPERFECT_AGENT = "Imperfect Agent"


class Case(str, Enum):
    CASE1 = "Case1_DirectSuccess"
    CASE2 = "Case2_IndirectSuccess_ImperfectRules"
    CASE3 = "Case3_IndirectSuccess_ImperfectAgent"
    CASE4 = "Case4_Failure_ImperfectRules"
    CASE5 = "Case5_Failure_ImperfectAgent"

    @property
    def number(self) -> int:
        return int(self.value[4])

    @property
    def failed(self) -> bool:
        return self in (Case.CASE4, Case.CASE5)


CASE_NAMES = {
    Case.CASE1: "Case 1: the task succeeded with no errors",
    Case.CASE2: "Case 2: the task succeeded after errors, and the rules were incomplete (*Imperfect Rules*)",
    Case.CASE3: "Case 3: the task succeeded after errors, and the agent did not follow the rules (*Imperfect Agent*)",
    Case.CASE4: "Case 4: the task failed, and the rules were incomplete (*Imperfect Rules*)",
    Case.CASE5: "Case 5: the task failed, and the agent did not follow the rules (*Imperfect Agent*)",
}

_CASE_TABLE = {
    (Outcome.INDIRECT_SUCCESS, Fault.IMPERFECT_RULES): Case.CASE2,
    (Outcome.INDIRECT_SUCCESS, Fault.IMPERFECT_AGENT): Case.CASE3,
    (Outcome.FAILURE, Fault.IMPERFECT_RULES): Case.CASE4,
    (Outcome.FAILURE, Fault.IMPERFECT_AGENT): Case.CASE5,
}


@dataclass(frozen=True)
class CaseLabel:
    case: Case
    fault_rationale: str = ""
    fault: Fault | None = None
    ambiguous: bool = False

    def to_dict(self) -> dict:
        return {"case": self.case.value, "fault": self.fault.value if self.fault else None,
                "ambiguous": self.ambiguous, "fault_rationale": self.fault_rationale}


def case_for(outcome: Outcome, fault: Fault | None) -> Case:
    """The five-row case table. Direct successes ignore the fault token."""
    if outcome is Outcome.DIRECT_SUCCESS:
        return Case.CASE1
    return _CASE_TABLE[(outcome, fault or Fault.IMPERFECT_RULES)]


def scan_fault(text: str) -> Fault | None:
    """The concluding fault token: whichever of the two appears last."""
    for pattern in (r"\*Imperfect (Rules|Agents?)\*", r"Imperfect (Rules|Agents?)"):
        hits = list(re.finditer(pattern, text))
        if hits:
            word = hits[-1].group(1)
            return Fault.IMPERFECT_RULES if word == "Rules" else Fault.IMPERFECT_AGENT
    return None


def trajectory_message(record: TrajectoryRecord, store: RuleStore) -> str:
    return prompts.render(
        "builder_trajectory",
        rules=store.render_for_prompt(include_validation_logs=True),
        episode_id=record.episode_id,
        trajectory=record.render(),
    )


def builder_system_prompt() -> str:
    return prompts.render("builder_system")


def classify_case(record: TrajectoryRecord, session: ChatSession, store: RuleStore,
                  use_llm: bool = True) -> CaseLabel:
    """Case 1 short-circuits; otherwise ask the Builder where the fault lies."""
    if record.outcome is None:
        raise ValueError("record has no outcome")
    if not use_llm:
        # case-conditioned prompting disabled: every episode goes down the Case 2 path
        return CaseLabel(Case.CASE2, "case classification disabled")
    if record.outcome is Outcome.DIRECT_SUCCESS:
        return CaseLabel(Case.CASE1)
    message = trajectory_message(record, store) + "\n\n" + prompts.render("builder_classify")
    reply = session.send(message)
    fault = scan_fault(reply)
    ambiguous = fault is None
    if ambiguous:
        log.warning("%s: no fault token in classification; assuming imperfect rules", record.episode_id)
    case = case_for(record.outcome, fault)
    return CaseLabel(case, reply.strip(), fault or Fault.IMPERFECT_RULES, ambiguous)


def case_policy(case: Case, allow_delete: bool = False):
    """Mechanical guardrails for one Builder session."""

    def policy(op: RuleOp, store: RuleStore) -> str | None:
        if op.op == "delete_rule" and not allow_delete:
            return "the Builder may not delete rules"
        new_type = None
        if op.op in ("write_rule", "update_rule") and op.args.get("type"):
            try:
                new_type = RuleType.parse(op.args["type"])
            except ValueError:
                return None  # the store reports the bad type
        if case.failed and op.op == "write_rule" and new_type in (
                RuleType.SUCCESS_PROCESS, RuleType.USEFUL_HELPER_METHOD):
            return f"{case.name}: the task failed, so {new_type.value} rules cannot be written"
        if not case.failed and new_type is RuleType.UNSOLVED_ERROR:
            return f"{case.name}: a successful episode cannot produce an Unsolved Error rule"
        return None

    return policy


def _render_results(results: list[OpResult]) -> str:
    lines = []
    for r in results:
        name = r.op.op
        if not r.applied:
            lines.append(f"- {name}: rejected ({r.reason})")
        elif name == "write_rule":
            lines.append(f"- write_rule: created {r.rule_id}")
        elif name in ("update_rule", "delete_rule"):
            lines.append(f"- {name}: {r.rule_id} done")
        elif name == "get_trajectory":
            lines.append(f"- get_trajectory:\n{r.output}")
        else:
            lines.append(f"- {name}: ok")
    return "\n".join(lines) or "- no rule_system calls were found"


@dataclass
class Ledger:
    results: list[OpResult] = field(default_factory=list)
    exchanges: int = 0
    forced_stop: bool = False
    fallback: list[str] = field(default_factory=list)

    def ops(self, applied_only: bool = False) -> list[RuleOp]:
        return [r.op for r in self.results if r.applied or not applied_only]

    def signature(self) -> list[tuple]:
        """(op, rule id or type, applied) triples, handy for comparisons."""
        out = []
        for r in self.results:
            key = r.op.args.get("rule_id") or r.op.args.get("type") or ""
            out.append((r.op.op, key, r.applied))
        return out

    def to_dict(self) -> dict:
        return {
            "results": [r.to_dict() for r in self.results],
            "exchanges": self.exchanges,
            "forced_stop": self.forced_stop,
            "fallback": list(self.fallback),
        }


def _run_ops(response: str, store: RuleStore, *, episode_id: str | None, agent: str, policy) -> tuple[
        list[OpResult], bool]:
    results: list[OpResult] = []
    stopped = False
    for op in parse_rule_ops(response):
        if stopped:
            results.append(store.apply(RuleOp(op.op, op.args, "call after stop_generating ignored", op.raw),
                                       episode_id=episode_id, agent=agent))
            continue
        result = store.apply(op, episode_id=episode_id, agent=agent, policy=policy)
        results.append(result)
        if op.op == "stop_generating" and result.applied:
            stopped = True
    return results, stopped


def manage_rules(record: TrajectoryRecord, case: CaseLabel, store: RuleStore, session: ChatSession,
                 op_budget: int = DEFAULT_OP_BUDGET, *, n_max: int = DEFAULT_N_MAX,
                 allow_delete: bool = False) -> Ledger:
    """Case-conditioned rule management; loops until stop_generating or the exchange budget."""
    instructions = prompts.render(
        "builder_base",
        case_name=CASE_NAMES[case.case],
        n_max=n_max,
        case_instructions=prompts.load(f"builder_case{case.case.number}").strip(),
    )
    message = instructions if session.turns else trajectory_message(record, store) + "\n\n" + instructions
    policy = case_policy(case.case, allow_delete)
    ledger = Ledger()
    for _ in range(op_budget):
        reply = session.send(message)
        ledger.exchanges += 1
        results, stopped = _run_ops(reply, store, episode_id=record.episode_id, agent="builder", policy=policy)
        ledger.results.extend(results)
        if stopped:
            return ledger
        message = prompts.render("builder_results", results=_render_results(results))
    ledger.forced_stop = True
    log.warning("%s: Builder exhausted %d exchanges without stop_generating", record.episode_id, op_budget)
    return ledger


# -- consolidation ----------------------------------------------------------

FALLBACK_ORDER = (
    RuleType.UNSOLVED_ERROR, RuleType.SPECIAL_PHENOMENON, RuleType.CORRECTED_ERROR,
    RuleType.SPECIAL_MECHANISM, RuleType.USEFUL_HELPER_METHOD, RuleType.SUCCESS_PROCESS,
)
_PROTECTED = (RuleType.SUCCESS_PROCESS, RuleType.USEFUL_HELPER_METHOD)


def consolidator_system_prompt(n_max: int = DEFAULT_N_MAX) -> str:
    return prompts.render("consolidator_system", n_max=n_max)


def _merge_guard(ops: list[RuleOp], store: RuleStore):
    """Reject deleting a protected rule in an exchange that also updates another rule of its type."""
    updated: dict[RuleType, set[str]] = {}
    for op in ops:
        rid = op.args.get("rule_id")
        if op.ok and op.op == "update_rule" and rid in store:
            updated.setdefault(store.get(rid).rule_type, set()).add(rid)

    def policy(op: RuleOp, st: RuleStore) -> str | None:
        if op.op == "write_rule":
            return "the Consolidator may only update, delete or fetch trajectories"
        if op.op == "delete_rule":
            rid = op.args.get("rule_id")
            if rid in st:
                rtype = st.get(rid).rule_type
                if rtype in _PROTECTED and updated.get(rtype, set()) - {rid}:
                    return f"two {rtype.value} rules cannot be merged"
        return None

    return policy


def consolidate(store: RuleStore, session: ChatSession, n_max: int = DEFAULT_N_MAX,
                op_budget: int = DEFAULT_OP_BUDGET, *, episode_id: str | None = None) -> Ledger:
    """Merge/delete rules until stop_generating; a deterministic fallback guarantees the cap."""
    ledger = Ledger()
    if not store.over_capacity(n_max):
        return ledger
    message = prompts.render("consolidator_rules", count=len(store), n_max=n_max,
                             rules=store.render_for_prompt(include_validation_logs=True))
    stopped = False
    for _ in range(op_budget):
        reply = session.send(message)
        ledger.exchanges += 1
        policy = _merge_guard(parse_rule_ops(reply), store)
        results, stopped = _run_ops(reply, store, episode_id=episode_id, agent="consolidator", policy=policy)
        ledger.results.extend(results)
        if stopped:
            break
        message = prompts.render("consolidator_results", results=_render_results(results),
                                 count=len(store), n_max=n_max)
    ledger.forced_stop = not stopped
    if store.over_capacity(n_max):
        ledger.fallback = fallback_prune(store, n_max, episode_id=episode_id)
        log.warning("consolidation fell back to deleting %s", ", ".join(ledger.fallback))
    return ledger


def fallback_prune(store: RuleStore, n_max: int, *, episode_id: str | None = None) -> list[str]:
    """Delete oldest rules by type priority until the store is at capacity."""
    deleted = []
    for rtype in FALLBACK_ORDER:
        for rule in store.of_type(rtype):
            if not store.over_capacity(n_max):
                return deleted
            store.apply(RuleOp("delete_rule", {"rule_id": rule.rule_id}), episode_id=episode_id,
                        agent="consolidator-fallback")
            deleted.append(rule.rule_id)
    return deleted
