from __future__ import annotations

import pytest

from rulebook.harness.metrics import EpisodeResult, Metrics
from rulebook.libraries import Libraries
from rulebook.llm import ScriptedBackend, create_session
from rulebook.planlang import Terminal, TerminalKind
from rulebook.planner import (MANUAL_HEADING, RULES_HEADING, EpisodeBudget, categorize_result, conclude,
                              planner_system_prompt, run_episode)
from rulebook.rulestore import CycleRecord, Outcome, load_initial_rules
from rulebook.scripted import household_backend
from rulebook.textworld import TaskType, sample_tasks


def reply(code: str) -> str:
    return f"### Understanding:\nok\n### Related Rules:\n- **rule_0**\n### Overall Plan:\n1. try\n```python\n{code}\n```"


def session_for(responder):
    return create_session(planner_system_prompt(), ScriptedBackend(responder=responder), session_id="p")


def run(code: str, budget=EpisodeBudget(), ttype=TaskType.PUT):
    task = sample_tasks(ttype, 1, 4)[0]
    sent = []

    def responder(messages, _session):
        sent.append(messages[-1]["content"])
        return reply(code)

    record = run_episode(task, load_initial_rules().render_for_prompt(), None, session_for(responder), budget)
    return record, sent


NEVER_SUCCEEDING = [
    "agent.go_to('nowhere_1')\nassert False, 'Error in [Step 1]: never'",
    "x = 1 // 0",
    "agent.go_to('nowhere_1')",  # completes without finishing the task
]


@pytest.mark.parametrize("code", NEVER_SUCCEEDING)
def test_never_succeeding_script_uses_exactly_four_cycles(code):
    record, sent = run(code)
    assert len(record.cycles) == 4
    assert record.actions <= 50
    assert record.reward == -1
    assert record.outcome is Outcome.FAILURE
    assert record.error_steps <= 4
    assert sent[0].startswith(RULES_HEADING)


def test_action_budget_stops_the_episode():
    record, _ = run("for i in range(30):\n    agent.go_to('nowhere_1')")
    assert record.actions == 50
    assert record.cycles[-1].terminal.kind is TerminalKind.BUDGET_EXHAUSTED
    assert len(record.cycles) == 2
    assert record.reward == -1


def test_error_step_bound_over_many_failures():
    metrics = Metrics()
    for code in ("assert False", "x = [][1]", "agent.go_to('nowhere_1')"):
        metrics.add(EpisodeResult.of(run(code)[0]))
    assert metrics.success_rate == 0
    assert metrics.avg_error_steps <= 4


def test_unparseable_reply_gets_one_retry():
    replies = iter(["no code at all", "still none", reply("agent.go_to('nowhere_1')")] * 4)
    record = run_episode(sample_tasks(TaskType.PUT, 1, 4)[0], "", None,
                         session_for(lambda m, s: next(replies)), EpisodeBudget(max_replans=1))
    assert record.cycles[0].format_error
    assert record.cycles[0].terminal.kind is TerminalKind.RUNTIME_ERROR
    assert not record.cycles[1].format_error


def test_categorize_result():
    record, _ = run("assert False")
    assert categorize_result(record) is Outcome.FAILURE
    record.reward = 1
    assert categorize_result(record) is Outcome.INDIRECT_SUCCESS
    record.cycles = [CycleRecord("r", None, "f", Terminal(TerminalKind.EPISODE_DONE, "", 1))]
    assert categorize_result(record) is Outcome.DIRECT_SUCCESS


def test_scripted_put_episode_succeeds_directly_and_concludes():
    task = sample_tasks(TaskType.PUT, 1, 4)[0]
    session = create_session(planner_system_prompt(), household_backend(), session_id="p", agent="planner")
    store = load_initial_rules()
    record = run_episode(task, store.render_for_prompt(), None, session, episode_id="epoch_0",
                         helper_sources=[store.get("rule_1").example])
    assert record.outcome is Outcome.DIRECT_SUCCESS and record.reward == 1
    conclude(record, record.outcome, session)
    assert "### Organized code block:" in record.conclusion
    assert record.validate() == []
    lib = Libraries()
    assert lib.save_from_conclusion(record) == "skill"


def test_manual_heading_used_in_test_mode():
    sent = []
    run_episode(sample_tasks(TaskType.PUT, 1, 4)[0], "# Manual", None,
                session_for(lambda m, s: sent.append(m[-1]["content"]) or reply("pass")),
                EpisodeBudget(max_replans=0), manual=True)
    assert sent[0].startswith(MANUAL_HEADING)
