"""Live smoke test against an OpenAI-compatible endpoint. Skipped unless one is configured.

Set RULEBOOK_BASE_URL (or OPENAI_BASE_URL), RULEBOOK_MODEL (or OPENAI_MODEL) and, if needed, an API key.
"""
from __future__ import annotations

import os

import pytest

from rulebook.builder import builder_system_prompt, classify_case, manage_rules
from rulebook.harness.config import RunConfig, apply_env
from rulebook.harness.stages import derive_seed, make_backend
from rulebook.llm import create_session
from rulebook.planner import conclude, planner_system_prompt, run_episode
from rulebook.rulestore import load_initial_rules
from rulebook.textworld import TaskType, sample_tasks


def endpoint_configured(env) -> bool:
    config = apply_env(RunConfig(), env)
    return bool(config.base_url and config.model)


@pytest.mark.skipif(not endpoint_configured(os.environ), reason="no endpoint configured")
def test_live_put_episode_and_builder_pass():
    config = apply_env(RunConfig(backend="http"))
    backend = make_backend(config)
    store = load_initial_rules()
    task = sample_tasks(TaskType.PUT, 1, derive_seed(config.seed, "live"))[0]
    planner = create_session(planner_system_prompt(), backend, session_id="live/planner", agent="planner")
    record = run_episode(task, store.render_for_prompt(), None, planner, episode_id="epoch_0",
                         helper_sources=[store.get("rule_1").example])
    conclude(record, record.outcome, planner)
    assert record.validate() == []

    builder = create_session(builder_system_prompt(), backend, session_id="live/builder", agent="builder")
    label = classify_case(record, builder, store)
    ledger = manage_rules(record, label, store, builder)
    assert ledger.exchanges >= 1
    assert ledger.results, "the Builder issued no rule_system calls"
    assert all(r.op.ok for r in ledger.results), [r.op.error for r in ledger.results if not r.op.ok]
