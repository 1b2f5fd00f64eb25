"""The Planner loop: prompt, parse, execute, feed back, then conclude."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable

from . import prompts
from .libraries import Retrieved
from .llm import ChatSession, ResponseFormatError, parse_planner_response
from .llm.parsing import first_code_block
from .planlang import PlanSession, Terminal, TerminalKind, format_feedback
from .rulestore import CycleRecord, Outcome, TrajectoryRecord
from .textworld import Episode, TaskSpec

log = logging.getLogger(__name__)

RULES_HEADING = "### Rules discovered so far:"
MANUAL_HEADING = "### Manual:"


@dataclass(frozen=True)
class EpisodeBudget:
    max_replans: int = 3
    max_actions: int = 50

    def __post_init__(self) -> None:
        if self.max_replans < 0 or self.max_actions < 1:
            raise ValueError("budgets must be positive")

    @property
    def max_cycles(self) -> int:
        return self.max_replans + 1


def planner_system_prompt() -> str:
    return prompts.render("planner_system")


def render_retrieved(item: Retrieved | None) -> str:
    if item is None or item.is_nothing:
        return ""
    if item.kind == "skill":
        entry = item.entry
        return prompts.render(
            "retrieved_skill",
            observation=getattr(entry, "initial_observation", ""),
            task=getattr(entry, "task_text", ""),
            code=item.text,
        )
    return prompts.render("retrieved_reflection", reflection=item.text.strip())


def build_task_message(rules_text: str, retrieved_text: str, observation: str, task_text: str,
                       *, manual: bool = False) -> str:
    """First Planner message: rules (or manual), retrieved item, then observation and task."""
    return prompts.render(
        "planner_task",
        rules_heading=MANUAL_HEADING if manual else RULES_HEADING,
        rules=rules_text.strip(),
        retrieved=retrieved_text,
        observation=observation,
        task=task_text,
    )


def categorize_result(record: TrajectoryRecord) -> Outcome:
    if record.reward == 1:
        return Outcome.INDIRECT_SUCCESS if record.error_steps else Outcome.DIRECT_SUCCESS
    return Outcome.FAILURE


def run_episode(task: TaskSpec, rules_text: str, retrieved: Retrieved | None, session: ChatSession,
                budget: EpisodeBudget = EpisodeBudget(), *, episode_id: str = "epoch_0",
                helper_sources: Iterable[str] = (), manual: bool = False) -> TrajectoryRecord:
    """Run one task to completion or until a budget runs out."""
    episode = Episode(task, budget.max_actions)
    observation, task_text = episode.reset()
    plan = PlanSession(episode)
    for src in helper_sources:
        plan.define_helpers(src)

    retrieved_text = render_retrieved(retrieved)
    record = TrajectoryRecord(episode_id, task, observation, retrieved=retrieved_text)
    message = build_task_message(rules_text, retrieved_text, observation, task_text, manual=manual)

    for _ in range(budget.max_cycles):
        response = session.send(message)
        turn = None
        try:
            turn = parse_planner_response(response)
        except ResponseFormatError as exc:
            response = session.send(prompts.render("planner_format_retry", problem=str(exc)))
            try:
                turn = parse_planner_response(response)
            except ResponseFormatError as exc2:
                terminal = Terminal(TerminalKind.RUNTIME_ERROR, f"response format error: {exc2}")
                feedback = f"Execution error:\nresponse format error: {exc2}\nCurrent state: {episode.state.summary()}"
                record.cycles.append(CycleRecord(response, None, feedback, terminal, format_error=True))
                message = prompts.render("planner_feedback", feedback=feedback)
                continue
        trace = plan.run_source(turn.code)
        feedback = format_feedback(trace)
        assert trace.terminal is not None
        record.cycles.append(CycleRecord(response, turn, feedback, trace.terminal,
                                         actions=len(trace.events), trace=trace.to_dict()))
        if trace.terminal.kind in (TerminalKind.EPISODE_DONE, TerminalKind.BUDGET_EXHAUSTED):
            break
        message = prompts.render("planner_feedback", feedback=feedback)

    if not episode.done:
        episode.fail()
    record.reward = episode.reward
    record.outcome = categorize_result(record)
    return record


def conclude(record: TrajectoryRecord, outcome: Outcome, session: ChatSession) -> str:
    """Ask the Planner for its conclusion; stored on the record and returned."""
    last_feedback = record.cycles[-1].feedback if record.cycles else ""
    name = "conclusion_success" if outcome.succeeded else "conclusion_failure"
    message = prompts.render("planner_feedback", feedback=last_feedback) + "\n" + prompts.render(name)
    reply = session.send(message)
    if outcome.succeeded and first_code_block(reply) is None:
        log.warning("%s: success conclusion has no code block", record.episode_id)
    record.conclusion = reply
    return reply
