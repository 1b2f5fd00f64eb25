"""Run configuration: INI file, environment overrides and a stable hash."""
from __future__ import annotations

import configparser
import hashlib
import io
import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from ..textworld import ConfigurationError, TaskType

STAGES = ("build", "formulate", "test", "replay")
BACKENDS = ("scripted", "http", "replay")

# size of the unseen split per task type (134 tasks in total)
DEFAULT_TEST_COUNTS = {"Put": 24, "Clean": 31, "Heat": 23, "Cool": 21, "Examine": 18, "PutTwo": 17}

# fields that do not change what a run produces
_UNHASHED = {"stage", "api_key", "out_dir", "test_workers", "backend", "base_url"}


@dataclass(frozen=True)
class RunConfig:
    stage: str = "build"
    backend: str = "scripted"
    base_url: str = ""
    model: str = ""
    api_key: str = ""
    seed: int = 0
    n_max: int = 12
    max_replans: int = 3
    max_actions: int = 50
    op_budget: int = 5
    tasks_per_type: int = 6
    early_stop_streak: int = 3
    test_counts: dict = field(default_factory=lambda: dict(DEFAULT_TEST_COUNTS))
    test_workers: int = 1
    use_libraries: bool = True
    case_prompts: bool = True
    online: bool = True
    formulate: bool = True
    builder_deletes: bool = False
    out_dir: str = "run"

    def __post_init__(self) -> None:
        if self.stage not in STAGES:
            raise ConfigurationError(f"unknown stage {self.stage!r}")
        if self.backend not in BACKENDS:
            raise ConfigurationError(f"unknown backend {self.backend!r}")
        for name in ("n_max", "max_actions", "op_budget", "tasks_per_type", "early_stop_streak", "test_workers"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive")
        if self.max_replans < 0:
            raise ConfigurationError("max_replans must be non-negative")
        counts = {t.value: 0 for t in TaskType}  # a type left out gets no test tasks
        for key, count in self.test_counts.items():
            if count < 0:
                raise ConfigurationError("test counts must be non-negative")
            counts[TaskType.parse(key).value] = int(count)
        object.__setattr__(self, "test_counts", counts)

    # -- paths ----------------------------------------------------------------

    @property
    def out(self) -> Path:
        return Path(self.out_dir)

    @property
    def store_path(self) -> Path:
        return self.out / "rules.json"

    @property
    def libraries_path(self) -> Path:
        return self.out / "libraries.json"

    @property
    def manual_path(self) -> Path:
        return self.out / "manual.md"

    @property
    def metrics_path(self) -> Path:
        return self.out / "metrics.json"

    @property
    def log_path(self) -> Path:
        return self.out / "runlog.jsonl"

    @property
    def checkpoint_path(self) -> Path:
        return self.out / "checkpoint.json"

    # -- identity -------------------------------------------------------------

    def hashed_fields(self) -> dict:
        d = asdict(self)
        return {k: v for k, v in sorted(d.items()) if k not in _UNHASHED}

    def config_hash(self) -> str:
        blob = json.dumps(self.hashed_fields(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def with_(self, **changes) -> "RunConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["api_key"] = ""  # never persisted
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})

    # -- files ----------------------------------------------------------------

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        cp["run"] = {"stage": self.stage, "seed": str(self.seed), "out_dir": self.out_dir}
        cp["backend"] = {"kind": self.backend, "base_url": self.base_url, "model": self.model}
        cp["budgets"] = {
            "n_max": str(self.n_max), "max_replans": str(self.max_replans),
            "max_actions": str(self.max_actions), "op_budget": str(self.op_budget),
        }
        cp["build"] = {"tasks_per_type": str(self.tasks_per_type), "early_stop_streak": str(self.early_stop_streak)}
        cp["test"] = {"workers": str(self.test_workers),
                      **{f"count.{k}": str(v) for k, v in sorted(self.test_counts.items())}}
        cp["ablations"] = {
            "use_libraries": str(self.use_libraries).lower(), "case_prompts": str(self.case_prompts).lower(),
            "online": str(self.online).lower(), "formulate": str(self.formulate).lower(),
            "builder_deletes": str(self.builder_deletes).lower(),
        }
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, path: str | Path, env: dict | None = None) -> "RunConfig":
        cp = configparser.ConfigParser()
        if not cp.read(path, encoding="utf-8"):
            raise ConfigurationError(f"cannot read config file {path}")
        return cls.from_parser(cp, env)

    @classmethod
    def from_parser(cls, cp: configparser.ConfigParser, env: dict | None = None) -> "RunConfig":
        values: dict = {}

        def take(section: str, key: str, name: str, conv=str) -> None:
            if cp.has_option(section, key):
                raw = cp.get(section, key)
                values[name] = conv(raw) if conv is not bool else cp.getboolean(section, key)

        take("run", "stage", "stage")
        take("run", "seed", "seed", int)
        take("run", "out_dir", "out_dir")
        take("backend", "kind", "backend")
        take("backend", "base_url", "base_url")
        take("backend", "model", "model")
        take("backend", "api_key", "api_key")
        for key in ("n_max", "max_replans", "max_actions", "op_budget"):
            take("budgets", key, key, int)
        take("build", "tasks_per_type", "tasks_per_type", int)
        take("build", "early_stop_streak", "early_stop_streak", int)
        take("test", "workers", "test_workers", int)
        if cp.has_section("test"):
            counts = dict(DEFAULT_TEST_COUNTS)
            for key, raw in cp.items("test"):
                if key.startswith("count."):
                    counts[TaskType.parse(key[len("count."):]).value] = int(raw)
            values["test_counts"] = counts
        for key in ("use_libraries", "case_prompts", "online", "formulate", "builder_deletes"):
            take("ablations", key, key, bool)
        return apply_env(cls(**values), env)


ENV_KEYS = {
    "base_url": ("RULEBOOK_BASE_URL", "OPENAI_BASE_URL"),
    "api_key": ("RULEBOOK_API_KEY", "OPENAI_API_KEY"),
    "model": ("RULEBOOK_MODEL", "OPENAI_MODEL"),
}


def apply_env(config: RunConfig, env: dict | None = None) -> RunConfig:
    """Endpoint settings from the environment take precedence over the file."""
    env = os.environ if env is None else env
    changes = {}
    for name, keys in ENV_KEYS.items():
        for key in keys:
            if env.get(key):
                changes[name] = env[key]
                break
    return replace(config, **changes) if changes else config
