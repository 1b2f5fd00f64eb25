"""The three stages (build, formulate, test), checkpoint/resume and replay."""
from __future__ import annotations

import hashlib
import json
import logging
import os
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from .. import builder as bld
from ..formulator import Manual, formulate, formulator_system_prompt
from ..libraries import Libraries
from ..llm import (ChatSession, ExchangeRecord, HTTPBackend, RecordingBackend, ReplayBackend,
                   ReplayIntegrityError, ReplayMissError, create_session)
from ..planner import EpisodeBudget, conclude, planner_system_prompt, run_episode
from ..rulestore import RuleStore, RuleType, TrajectoryRecord, load_initial_rules
from ..textworld import ConfigurationError, TaskSpec, TaskType, sample_tasks
from .config import RunConfig
from .metrics import EpisodeResult, Metrics
from .runlog import RunLog, dumps, exchanges_of, iter_kind, read_records

log = logging.getLogger(__name__)


class ConfigMismatchError(ConfigurationError):
    pass


class StageIsolationError(RuntimeError):
    pass


def derive_seed(root: int, label: str) -> int:
    """Component seed from the root seed by labelled hashing."""
    digest = hashlib.sha256(f"{root}:{label}".encode("utf-8")).hexdigest()
    return int(digest[:16], 16) % 2**31


def build_schedule(config: RunConfig) -> list[TaskSpec]:
    tasks = []
    for ttype in TaskType:
        tasks += sample_tasks(ttype, config.tasks_per_type, derive_seed(config.seed, f"build:{ttype.value}"))
    random.Random(derive_seed(config.seed, "build:shuffle")).shuffle(tasks)
    return tasks


def test_tasks(config: RunConfig) -> list[TaskSpec]:
    tasks = []
    for ttype in TaskType:
        count = config.test_counts.get(ttype.value, 0)
        if count:
            tasks += sample_tasks(ttype, count, derive_seed(config.seed, f"test:{ttype.value}"), split="test")
    return tasks


def make_backend(config: RunConfig):
    if config.backend == "scripted":
        from ..scripted import household_backend
        return household_backend()
    if config.backend == "http":
        if not (config.base_url and config.model):
            raise ConfigurationError("the http backend needs base_url and model (config file or environment)")
        return HTTPBackend(config.base_url, config.model, config.api_key or None)
    raise ConfigurationError("the replay backend is created from a run log; use the replay command")


def helper_sources(store: RuleStore) -> list[str]:
    return [r.example for r in store.of_type(RuleType.USEFUL_HELPER_METHOD) if r.example.strip()]


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def libraries_json(libraries: Libraries) -> str:
    return json.dumps(libraries.snapshot(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


@dataclass
class BuildState:
    store: RuleStore
    libraries: Libraries = field(default_factory=Libraries)
    position: int = 0           # next schedule index (phase 1) or pending index (phase 2)
    phase: int = 1              # offline mode manages rules in a second phase
    streaks: dict[str, int] = field(default_factory=dict)
    solved: list[str] = field(default_factory=list)
    completed: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "store": self.store.snapshot(include_archive=True),
            "libraries": self.libraries.snapshot(),
            "position": self.position, "phase": self.phase,
            "streaks": dict(self.streaks), "solved": list(self.solved), "completed": list(self.completed),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BuildState":
        return cls(RuleStore.load(d["store"]), Libraries.load(d["libraries"]), d["position"], d["phase"],
                   dict(d["streaks"]), list(d["solved"]), list(d["completed"]))


class Pipeline:
    """Runs stages against one backend, recording every exchange into a run log."""

    def __init__(self, config: RunConfig, backend, runlog: RunLog, *, checkpoints: bool = True):
        self.config = config
        self.inner = backend
        self.runlog = runlog
        self.recorder = RecordingBackend(backend, sink=runlog.exchange, start_index=runlog.exchanges)
        self.checkpoints = checkpoints
        self.budget = EpisodeBudget(config.max_replans, config.max_actions)
        if not runlog.lines:
            runlog.write("config", config=config.hashed_fields(), config_hash=config.config_hash())
        elif json.loads(runlog.lines[0]).get("config_hash") != config.config_hash():
            raise ConfigMismatchError("run log was written with a different configuration")

    def session(self, system_prompt: str, session_id: str, agent: str, backend=None) -> ChatSession:
        return create_session(system_prompt, backend or self.recorder, session_id=session_id, agent=agent)

    # -- build ----------------------------------------------------------------

    def _checkpoint(self, state: BuildState) -> None:
        if not self.checkpoints:
            return
        path = self.config.checkpoint_path
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {"config_hash": self.config.config_hash(), "log_lines": len(self.runlog),
                   "state": state.to_dict()}
        tmp = path.with_suffix(".tmp")
        tmp.write_text(dumps(payload), encoding="utf-8")
        os.replace(tmp, path)

    def _plan_episode(self, task: TaskSpec, eid: str, state: BuildState, rules_store: RuleStore) -> TrajectoryRecord:
        retrieved = state.libraries.retrieve(task.task_type) if self.config.use_libraries else None
        helpers = helper_sources(rules_store)
        if retrieved is not None and retrieved.kind == "skill":
            helpers.append(retrieved.text)
        planner = self.session(planner_system_prompt(), f"{eid}/planner", "planner")
        record = run_episode(task, rules_store.render_for_prompt(), retrieved, planner, self.budget,
                             episode_id=eid, helper_sources=helpers)
        conclude(record, record.outcome, planner)
        state.store.archive_trajectory(record)
        if self.config.use_libraries:
            state.libraries.save_from_conclusion(record)
        self.runlog.write("episode", stage="build", episode_id=eid, record=record.to_dict())
        return record

    def _manage(self, record: TrajectoryRecord, store: RuleStore) -> None:
        eid = record.episode_id
        session = self.session(bld.builder_system_prompt(), f"{eid}/builder", "builder")
        label = bld.classify_case(record, session, store, use_llm=self.config.case_prompts)
        ledger = bld.manage_rules(record, label, store, session, self.config.op_budget,
                                  n_max=self.config.n_max, allow_delete=self.config.builder_deletes)
        consolidation = None
        if store.over_capacity(self.config.n_max):
            csession = self.session(bld.consolidator_system_prompt(self.config.n_max), f"{eid}/consolidator",
                                    "consolidator")
            consolidation = bld.consolidate(store, csession, self.config.n_max, self.config.op_budget,
                                            episode_id=eid)
        self.runlog.write("ledger", episode_id=eid, case=label.to_dict(), builder=ledger.to_dict(),
                          consolidation=consolidation.to_dict() if consolidation else None)
        self.runlog.write("store", episode_id=eid, snapshot=store.snapshot())

    def _track(self, record: TrajectoryRecord, state: BuildState) -> None:
        key = record.task.task_type.value
        state.streaks[key] = state.streaks.get(key, 0) + 1 if record.reward == 1 else 0
        if state.streaks[key] >= self.config.early_stop_streak and key not in state.solved:
            state.solved.append(key)

    def build(self, state: BuildState | None = None) -> BuildState:
        state = state or BuildState(load_initial_rules())
        schedule = build_schedule(self.config)
        if state.phase == 1:
            frozen = RuleStore.load(state.store.snapshot()) if not self.config.online else None
            while state.position < len(schedule):
                i = state.position
                task, eid = schedule[i], f"epoch_{i}"
                if task.task_type.value in state.solved:
                    self.runlog.write("skip", episode_id=eid, task_type=task.task_type.value)
                else:
                    record = self._plan_episode(task, eid, state, frozen or state.store)
                    if self.config.online:
                        self._manage(record, state.store)
                    self._track(record, state)
                    state.completed.append(eid)
                state.position += 1
                self._checkpoint(state)
            if not self.config.online:
                state.phase, state.position = 2, 0
                self._checkpoint(state)
        if state.phase == 2:
            while state.position < len(state.completed):
                record = state.store.archive[state.completed[state.position]]
                self._manage(record, state.store)
                state.position += 1
                self._checkpoint(state)
        self.runlog.write("stage_end", stage="build", store=state.store.to_json(),
                          libraries=libraries_json(state.libraries))
        return state

    # -- formulate ------------------------------------------------------------

    def formulate(self, store: RuleStore) -> Manual | None:
        manual = None
        if self.config.formulate:
            session = self.session(formulator_system_prompt(), "formulator", "formulator")
            manual = formulate(store, session)
            for repair in manual.repairs:
                self.runlog.write("manual_repair", detail=repair)
        self.runlog.write("stage_end", stage="formulate", manual=manual.rendered if manual else "")
        return manual

    # -- test -----------------------------------------------------------------

    def test(self, store: RuleStore, manual_text: str | None, libraries: Libraries) -> Metrics:
        before = (_digest(store.to_json()), _digest(libraries_json(libraries)))
        rules_text = manual_text if manual_text else store.render_for_prompt()
        tasks = test_tasks(self.config)
        helpers = helper_sources(store)
        width = 1 if isinstance(self.inner, ReplayBackend) else self.config.test_workers

        def one(i: int, task: TaskSpec) -> tuple[TrajectoryRecord, list[ExchangeRecord]]:
            local = RecordingBackend(self.inner)
            retrieved = libraries.retrieve(task.task_type) if self.config.use_libraries else None
            extra = [retrieved.text] if retrieved is not None and retrieved.kind == "skill" else []
            session = self.session(planner_system_prompt(), f"test_{i}/planner", "planner", backend=local)
            record = run_episode(task, rules_text, retrieved, session, self.budget, episode_id=f"test_{i}",
                                 helper_sources=helpers + extra, manual=bool(manual_text))
            return record, local.records

        if width > 1:
            with ThreadPoolExecutor(max_workers=width) as pool:
                results = list(pool.map(lambda a: one(*a), enumerate(tasks)))
        else:
            results = [one(i, t) for i, t in enumerate(tasks)]

        metrics = Metrics()
        for record, exchanges in results:  # written in task order whatever the completion order
            for ex in exchanges:
                self.runlog.exchange(replace(ex, index=self.runlog.exchanges))
            self.runlog.write("episode", stage="test", episode_id=record.episode_id, record=record.to_dict())
            metrics.add(EpisodeResult.of(record))
        after = (_digest(store.to_json()), _digest(libraries_json(libraries)))
        if before != after:
            raise StageIsolationError("the test stage modified the rule store or the libraries")
        self.runlog.write("stage_end", stage="test", metrics=metrics.to_json())
        return metrics


# -- whole runs ---------------------------------------------------------------

@dataclass
class RunResult:
    config: RunConfig
    store: RuleStore | None = None
    libraries: Libraries | None = None
    manual: Manual | None = None
    metrics: Metrics | None = None
    runlog: RunLog | None = None


def write_outputs(config: RunConfig, result: RunResult) -> None:
    config.out.mkdir(parents=True, exist_ok=True)
    if result.store is not None:
        config.store_path.write_text(result.store.to_json(), encoding="utf-8")
    if result.libraries is not None:
        config.libraries_path.write_text(libraries_json(result.libraries), encoding="utf-8")
    if result.manual is not None:
        config.manual_path.write_text(result.manual.rendered, encoding="utf-8")
    if result.metrics is not None:
        config.metrics_path.write_text(result.metrics.to_json(), encoding="utf-8")


def load_checkpoint(config: RunConfig) -> tuple[BuildState, int] | None:
    if not config.checkpoint_path.exists():
        return None
    payload = json.loads(config.checkpoint_path.read_text(encoding="utf-8"))
    if payload["config_hash"] != config.config_hash():
        raise ConfigMismatchError("checkpoint was written with a different configuration")
    return BuildState.from_dict(payload["state"]), payload["log_lines"]


def run_build(config: RunConfig, backend=None, *, resume: bool = False, persist: bool = True) -> RunResult:
    """Build stage; with ``resume`` it continues from the last checkpoint."""
    backend = backend or make_backend(config)
    state = None
    if persist:
        config.out.mkdir(parents=True, exist_ok=True)
        if resume:
            found = load_checkpoint(config)
            if found is None:
                raise ConfigurationError(f"no checkpoint in {config.out}")
            state, lines = found
            runlog = RunLog(config.log_path)
            runlog.truncate(lines)
        else:
            for p in (config.log_path, config.checkpoint_path):
                if p.exists():
                    p.unlink()
            runlog = RunLog(config.log_path)
    else:
        runlog = RunLog(None)
    pipe = Pipeline(config, backend, runlog, checkpoints=persist)
    state = pipe.build(state)
    result = RunResult(config, state.store, state.libraries, runlog=runlog)
    if persist:
        write_outputs(config, result)
    return result


def run_all(config: RunConfig, backend=None, *, persist: bool = True) -> RunResult:
    """Build, formulate and test in one go."""
    result = run_build(config, backend, persist=persist)
    pipe = Pipeline(config, backend or make_backend(config), result.runlog, checkpoints=False)
    result.manual = pipe.formulate(result.store)
    result.metrics = pipe.test(result.store, result.manual.rendered if result.manual else None, result.libraries)
    if persist:
        write_outputs(config, result)
    return result


def run_formulate(config: RunConfig, backend=None) -> RunResult:
    store = RuleStore.from_file(config.store_path)
    pipe = Pipeline(config, backend or make_backend(config), RunLog(config.log_path), checkpoints=False)
    result = RunResult(config, store=store, manual=pipe.formulate(store))
    if result.manual is None and config.manual_path.exists():
        config.manual_path.unlink()
    write_outputs(config, RunResult(config, manual=result.manual))
    return result


def run_test(config: RunConfig, backend=None) -> RunResult:
    store = RuleStore.from_file(config.store_path)
    libraries = Libraries.load(json.loads(config.libraries_path.read_text(encoding="utf-8")))
    manual_text = None
    if config.formulate and config.manual_path.exists():
        manual_text = config.manual_path.read_text(encoding="utf-8")
    pipe = Pipeline(config, backend or make_backend(config), RunLog(config.log_path), checkpoints=False)
    metrics = pipe.test(store, manual_text, libraries)
    write_outputs(config, RunResult(config, metrics=metrics))
    return RunResult(config, store, libraries, metrics=metrics)


# -- replay -------------------------------------------------------------------

@dataclass
class ReplayReport:
    ok: bool
    stages: list[str]
    mismatches: list[str] = field(default_factory=list)
    divergence_index: int | None = None
    divergence: str = ""
    result: RunResult | None = None

    def summary(self) -> str:
        if self.ok:
            return f"replay matched: {', '.join(self.stages)} reproduced byte for byte"
        if self.divergence_index is not None:
            return f"replay diverged at exchange {self.divergence_index}: {self.divergence}"
        return "replay mismatch: " + "; ".join(self.mismatches)


def replay(log_path: str | Path, config: RunConfig | None = None) -> ReplayReport:
    """Re-run every logged stage against the recorded exchanges and compare the outputs."""
    records = read_records(log_path)
    head = next(iter_kind(records, "config"), None)
    if head is None:
        raise ConfigurationError("run log has no config record")
    logged = RunConfig.from_dict(head["config"])
    if logged.config_hash() != head["config_hash"]:
        raise ConfigMismatchError("run log config record is inconsistent with its hash")
    if config is not None and config.config_hash() != head["config_hash"]:
        raise ConfigMismatchError("refusing to replay: configuration differs from the logged run")
    ends = list(iter_kind(records, "stage_end"))
    backend = ReplayBackend(exchanges_of(records), strict=True)
    pipe = Pipeline(logged.with_(test_workers=1), backend, RunLog(None), checkpoints=False)
    report = ReplayReport(True, [e["stage"] for e in ends])
    result = RunResult(logged, runlog=pipe.runlog)
    store, libraries, manual_text = None, None, None
    try:
        for end in ends:
            stage = end["stage"]
            if stage == "build":
                state = pipe.build()
                store, libraries = state.store, state.libraries
                got = {"store": store.to_json(), "libraries": libraries_json(libraries)}
            elif stage == "formulate":
                manual = pipe.formulate(store)
                manual_text = manual.rendered if manual else None
                result.manual = manual
                got = {"manual": manual_text or ""}
            else:
                metrics = pipe.test(store, manual_text, libraries)
                result.metrics = metrics
                got = {"metrics": metrics.to_json()}
            for key, value in got.items():
                if value != end[key]:
                    report.mismatches.append(f"{stage}: {key} differs")
    except (ReplayMissError, ReplayIntegrityError) as exc:
        report.divergence_index = getattr(exc, "index", None)
        report.divergence = str(exc)
    result.store, result.libraries = store, libraries
    report.result = result
    report.ok = not report.mismatches and report.divergence_index is None
    if not report.ok:
        log.warning(report.summary())
    return report


__all__ = [
    "BuildState", "ConfigMismatchError", "Pipeline", "ReplayReport", "RunResult", "StageIsolationError",
    "build_schedule", "derive_seed", "load_checkpoint", "make_backend", "replay", "run_all", "run_build",
    "run_formulate", "run_test", "test_tasks", "write_outputs",
]
