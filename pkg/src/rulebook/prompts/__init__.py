"""Prompt templates (``string.Template`` files with ``${name}`` placeholders)."""
from __future__ import annotations

from functools import lru_cache
from importlib import resources
from string import Template

PROMPT_VERSION = "1"


@lru_cache(maxsize=None)
def load(name: str) -> str:
    return (resources.files(__name__) / f"{name}.txt").read_text(encoding="utf-8")


def render(name: str, **values: object) -> str:
    """Fill a template; every placeholder must be supplied."""
    values.setdefault("action_api", load("action_api").rstrip("\n"))
    return Template(load(name)).substitute({k: str(v) for k, v in values.items()})


def names() -> list[str]:
    return sorted(p.name[:-4] for p in resources.files(__name__).iterdir() if p.name.endswith(".txt"))
