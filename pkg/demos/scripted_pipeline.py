"""Build, formulate and test with the scripted backend, then replay the run log and tamper with it."""
from __future__ import annotations

import json
import logging
import sys
import tempfile
from pathlib import Path

from rulebook.harness.config import RunConfig
from rulebook.harness.runlog import iter_kind, read_records
from rulebook.harness.stages import replay, run_all


def main(out_dir: str | None = None) -> None:
    out = Path(out_dir or tempfile.mkdtemp(prefix="rulebook-demo-"))
    config = RunConfig(out_dir=str(out))
    result = run_all(config)

    print(f"== build ({out})")
    records = read_records(config.log_path)
    for ledger in iter_kind(records, "ledger"):
        ops = [f"{r['op']['op']}{'' if r['applied'] else ' (rejected)'}" for r in ledger["builder"]["results"]]
        print(f"{ledger['episode_id']:>9}  {ledger['case']['case']:<40} {', '.join(ops)}")
    print(f"final store: {len(result.store)} rules")

    print("\n== manual outline")
    for cat in result.manual.categories:
        print(f"{cat.name}: {', '.join(cat.rule_ids)}")

    print("\n== test")
    print(result.metrics.table())

    print("== replay")
    print(replay(config.log_path).summary())
    lines = config.log_path.read_text(encoding="utf-8").splitlines()
    target = next(i for i, ln in enumerate(lines) if json.loads(ln).get("index") == 10)
    record = json.loads(lines[target])
    record["response_text"] += " "  # a one-byte edit to a recorded model response
    lines[target] = json.dumps(record, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    tampered = out / "tampered.jsonl"
    tampered.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(replay(tampered).summary())


if __name__ == "__main__":
    logging.basicConfig(level=logging.ERROR)
    main(sys.argv[1] if len(sys.argv) > 1 else None)
