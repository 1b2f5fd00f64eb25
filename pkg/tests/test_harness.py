from __future__ import annotations

import hashlib
import json
import time
from fractions import Fraction

import pytest

from rulebook.harness import stages
from rulebook.harness.cli import main
from rulebook.harness.config import RunConfig
from rulebook.harness.metrics import EpisodeResult, Metrics
from rulebook.harness.runlog import iter_kind, read_records
from rulebook.harness.stages import (ConfigMismatchError, build_schedule, derive_seed, load_checkpoint, make_backend,
                                     replay, run_all, run_build)
from rulebook.rulestore import RuleType
from rulebook.scripted import household_backend
from rulebook.textworld import ConfigurationError, TaskType

SP_PHRASES = {"Put": "put some object", "Heat": "heat some object", "Cool": "cool some object",
              "Clean": "clean some object", "PutTwo": "put two objects", "Examine": "look at some object"}


@pytest.fixture(scope="module")
def baseline(tmp_path_factory):
    config = RunConfig(out_dir=str(tmp_path_factory.mktemp("base")))
    start = time.perf_counter()
    result = run_all(config)
    return config, result, time.perf_counter() - start


def records(config: RunConfig) -> list[dict]:
    return read_records(config.log_path)


def stage_end(config: RunConfig, stage: str) -> dict:
    return next(r for r in iter_kind(records(config), "stage_end") if r["stage"] == stage)


# -- configuration ------------------------------------------------------------------

def test_ini_round_trip_and_env_override(tmp_path):
    config = RunConfig(seed=7, tasks_per_type=3, test_counts={"Put": 2, "Heat": 0}, case_prompts=False,
                       out_dir=str(tmp_path))
    path = tmp_path / "run.ini"
    path.write_text(config.to_ini())
    loaded = RunConfig.from_ini(path, env={})
    assert loaded.config_hash() == config.config_hash()
    assert loaded.test_counts["Put"] == 2 and loaded.test_counts["Clean"] == 0
    partial = tmp_path / "partial.ini"
    partial.write_text("[test]\ncount.Heat = 5\n")
    assert RunConfig.from_ini(partial, env={}).test_counts == {**RunConfig().test_counts, "Heat": 5}
    env = RunConfig.from_ini(path, env={"OPENAI_BASE_URL": "http://x/v1", "RULEBOOK_MODEL": "m"})
    assert (env.base_url, env.model) == ("http://x/v1", "m")
    assert env.config_hash() != config.config_hash()  # the model is part of a run's identity


def test_unhashed_fields_do_not_change_identity():
    a = RunConfig()
    assert a.with_(out_dir="elsewhere", test_workers=8, api_key="k").config_hash() == a.config_hash()
    assert a.with_(seed=1).config_hash() != a.config_hash()


@pytest.mark.parametrize("bad", [{"stage": "dance"}, {"backend": "psychic"}, {"n_max": 0}, {"max_replans": -1},
                                 {"test_counts": {"Juggle": 1}}])
def test_invalid_configs_are_rejected(bad):
    with pytest.raises(ConfigurationError):
        RunConfig(**bad)


def test_http_backend_needs_an_endpoint():
    with pytest.raises(ConfigurationError):
        make_backend(RunConfig(backend="http"))


def test_seed_derivation_and_schedule():
    expected = int(hashlib.sha256(b"0:build:Put").hexdigest()[:16], 16) % 2**31
    assert derive_seed(0, "build:Put") == expected
    config = RunConfig(tasks_per_type=2)
    schedule = build_schedule(config)
    assert schedule == build_schedule(config)
    assert sorted(t.task_type.value for t in schedule) == sorted([t.value for t in TaskType] * 2)
    assert build_schedule(config.with_(seed=1)) != schedule
    tests = stages.test_tasks(RunConfig())
    assert len(tests) == 134
    assert not {t.seed for t in tests} & {t.seed for t in schedule}


def test_metrics_are_exact_fractions():
    m = Metrics()
    for reward, err in ((1, 0), (1, 2), (-1, 4)):
        m.add(EpisodeResult("e", TaskType.PUT, 0, reward, err, 3))
    assert m.success_rate == Fraction(2, 3) and m.avg_error_steps == 2
    assert "66.7" in m.table()


# -- full scripted runs ----------------------------------------------------------------

def test_build_produces_a_capped_store_with_procedures_for_solved_types(baseline):
    config, result, elapsed = baseline
    assert elapsed < 60
    store = result.store
    assert len(store) <= config.n_max
    state, _ = load_checkpoint(config)
    assert state.solved
    sp_text = [r.content for r in store.of_type(RuleType.SUCCESS_PROCESS)]
    for ttype in state.solved:
        assert any(SP_PHRASES[ttype] in text for text in sp_text), ttype
    assert result.metrics.total == 134


def test_runs_are_byte_identical(baseline, tmp_path):
    config, result, _ = baseline
    for k in range(2):
        again = config.with_(out_dir=str(tmp_path / str(k)))
        run_all(again)
        for name in ("rules.json", "libraries.json", "manual.md", "metrics.json", "runlog.jsonl"):
            assert (again.out / name).read_bytes() == (config.out / name).read_bytes(), name


def test_parallel_test_stage_logs_identically(baseline, tmp_path):
    config, _, _ = baseline
    wide = config.with_(out_dir=str(tmp_path), test_workers=4)
    run_all(wide)
    assert wide.log_path.read_bytes() == config.log_path.read_bytes()


def test_replay_reproduces_the_run(baseline):
    config, _, _ = baseline
    report = replay(config.log_path)
    assert report.ok, report.summary()
    assert report.stages == ["build", "formulate", "test"]
    assert report.result.store.to_json() == config.store_path.read_text()


def test_single_byte_edit_is_located(baseline, tmp_path):
    config, _, _ = baseline
    lines = config.log_path.read_text().splitlines()
    exchanges = [i for i, ln in enumerate(lines) if json.loads(ln)["kind"] == "exchange"]
    target = json.loads(lines[exchanges[40]])
    text = target["response_text"]
    pos = len(text) // 2
    target["response_text"] = text[:pos] + ("x" if text[pos] != "x" else "y") + text[pos + 1:]
    lines[exchanges[40]] = json.dumps(target, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    edited = tmp_path / "edited.jsonl"
    edited.write_text("\n".join(lines) + "\n")
    report = replay(edited)
    assert not report.ok and report.divergence_index == 40


def test_replay_refuses_a_different_config(baseline):
    config, _, _ = baseline
    with pytest.raises(ConfigMismatchError):
        replay(config.log_path, config.with_(seed=5))


class Crash(RuntimeError):
    pass


class CrashingBackend:
    def __init__(self, inner, after: int):
        self.inner, self.left = inner, after
        self.tag = inner.tag

    def complete(self, messages, session):
        if self.left == 0:
            raise Crash("simulated crash")
        self.left -= 1
        return self.inner.complete(messages, session)


def test_resume_after_crash_matches_clean_run(tmp_path):
    config = RunConfig(tasks_per_type=2, out_dir=str(tmp_path / "crash"))
    with pytest.raises(Crash):
        run_build(config, CrashingBackend(household_backend(), 23))
    state, _ = load_checkpoint(config)
    assert 0 < state.position
    resumed = run_build(config, resume=True)
    clean_config = config.with_(out_dir=str(tmp_path / "clean"))
    clean = run_build(clean_config)
    assert resumed.store.to_json() == clean.store.to_json()
    assert config.log_path.read_bytes() == clean_config.log_path.read_bytes()
    with pytest.raises(ConfigMismatchError):
        load_checkpoint(config.with_(seed=9))


# -- ablations differ only in the toggled dimension ------------------------------------

def ablation(baseline, tmp_path, **changes):
    config = baseline[0].with_(out_dir=str(tmp_path), **changes)
    return config, run_all(config)


def build_episodes(config: RunConfig) -> list[dict]:
    return [r for r in iter_kind(records(config), "episode") if r["stage"] == "build"]


def test_ablation_without_libraries(baseline, tmp_path):
    config, result = ablation(baseline, tmp_path, use_libraries=False)
    eps = build_episodes(config)
    assert all(e["record"]["retrieved"] == "" for e in eps)
    assert not result.libraries.skills and not result.libraries.reflections
    assert eps[0] == build_episodes(baseline[0])[0]


def test_ablation_without_case_prompts(baseline, tmp_path):
    config, _ = ablation(baseline, tmp_path, case_prompts=False)
    ledgers = list(iter_kind(records(config), "ledger"))
    assert {lg["case"]["case"] for lg in ledgers} == {"Case2_IndirectSuccess_ImperfectRules"}
    builder_exchanges = sum(1 for r in iter_kind(records(config), "exchange") if r["agent"] == "builder")
    assert builder_exchanges == sum(lg["builder"]["exchanges"] for lg in ledgers)
    assert build_episodes(config)[0] == build_episodes(baseline[0])[0]


def test_offline_ablation_manages_after_planning(baseline, tmp_path):
    config, _ = ablation(baseline, tmp_path, online=False)
    build_kinds = [r["kind"] for r in records(config)
                   if r["kind"] == "ledger" or (r["kind"] == "episode" and r["stage"] == "build")]
    n = build_kinds.count("episode")
    assert build_kinds == ["episode"] * n + ["ledger"] * n
    base_first = next(iter_kind(records(baseline[0]), "ledger"))
    assert next(iter_kind(records(config), "ledger")) == base_first


def test_ablation_without_formulation(baseline, tmp_path):
    config, result = ablation(baseline, tmp_path, formulate=False)
    assert result.manual is None and stage_end(config, "formulate")["manual"] == ""
    assert stage_end(config, "build") == stage_end(baseline[0], "build")
    assert not any(r["agent"] == "formulator" for r in iter_kind(records(config), "exchange"))


# -- command line ----------------------------------------------------------------------

def test_cli_run_and_replay(tmp_path, capsys):
    out = tmp_path / "cli"
    assert main(["run", "--out", str(out), "--tasks-per-type", "1"]) == 0
    printed = capsys.readouterr().out
    assert "Put two" in printed and "ALL" in printed
    assert main(["replay", str(out / "runlog.jsonl")]) == 0
    assert "replay matched" in capsys.readouterr().out
    assert main(["formulate", "--out", str(tmp_path / "missing")]) == 2
