"""Line-delimited JSON run log: config, LLM exchanges, episodes, ledgers and stage outputs."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Iterator

from ..llm import ExchangeRecord


def dumps(record: dict) -> str:
    return json.dumps(record, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


class RunLog:
    """Append-only writer. Each record is one line; lines are flushed as written."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path else None
        self.lines: list[str] = []
        self.exchanges = 0
        if self.path is not None and self.path.exists():
            self.lines = self.path.read_text(encoding="utf-8").splitlines()
            self.exchanges = sum(1 for ln in self.lines if json.loads(ln)["kind"] == "exchange")

    def write(self, kind: str, **payload) -> None:
        line = dumps({"kind": kind, **payload})
        self.lines.append(line)
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")

    def exchange(self, record: ExchangeRecord) -> None:
        self.write("exchange", **record.to_dict())
        self.exchanges += 1

    def truncate(self, n_lines: int) -> None:
        """Drop everything after the first ``n_lines`` records (used when resuming)."""
        self.lines = self.lines[:n_lines]
        self.exchanges = sum(1 for ln in self.lines if json.loads(ln)["kind"] == "exchange")
        if self.path is not None:
            self.path.write_text("".join(ln + "\n" for ln in self.lines), encoding="utf-8")

    def __len__(self) -> int:
        return len(self.lines)

    def text(self) -> str:
        return "".join(ln + "\n" for ln in self.lines)


def read_records(path: str | Path) -> list[dict]:
    return [json.loads(ln) for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]


def iter_kind(records: list[dict], kind: str) -> Iterator[dict]:
    return (r for r in records if r["kind"] == kind)


def exchanges_of(records: list[dict]) -> list[ExchangeRecord]:
    return [ExchangeRecord.from_dict(r) for r in iter_kind(records, "exchange")]
