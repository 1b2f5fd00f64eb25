from __future__ import annotations

import pytest

from rulebook.rulestore import load_initial_rules
from rulebook.textworld import Episode, TaskType, sample_tasks


@pytest.fixture
def initial_store():
    return load_initial_rules()


@pytest.fixture
def put_episode():
    task = sample_tasks(TaskType.PUT, 1, 7)[0]
    return Episode(task)


def pytest_terminal_summary(terminalreporter):
    import sys
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for name, (status, detail) in results.items():
        terminalreporter.write_line(f"{status}: {name} ({detail})")
