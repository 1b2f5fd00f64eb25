"""Experiment harness: configuration, stages, run logs, metrics and the CLI."""
from __future__ import annotations

from .config import DEFAULT_TEST_COUNTS, RunConfig, apply_env
from .metrics import EpisodeResult, Metrics
from .runlog import RunLog, read_records
from .stages import (
    BuildState, ConfigMismatchError, Pipeline, ReplayReport, RunResult, StageIsolationError, build_schedule,
    derive_seed, make_backend, replay, run_all, run_build, run_formulate, run_test, test_tasks,
)

__all__ = [
    "BuildState", "ConfigMismatchError", "DEFAULT_TEST_COUNTS", "EpisodeResult", "Metrics", "Pipeline",
    "ReplayReport", "RunConfig", "RunLog", "RunResult", "StageIsolationError", "apply_env", "build_schedule",
    "derive_seed", "make_backend", "read_records", "replay", "run_all", "run_build", "run_formulate", "run_test",
    "test_tasks",
]
