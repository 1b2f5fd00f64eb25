"""Command line entry point: ``rulebook {build,formulate,test,run,replay}``."""
from __future__ import annotations

import argparse
import logging
import sys

from ..llm import LLMError
from ..textworld import ConfigurationError
from .config import RunConfig, apply_env
from .stages import replay, run_all, run_build, run_formulate, run_test

ABLATIONS = {
    "no_libraries": "use_libraries",
    "no_case_prompts": "case_prompts",
    "offline": "online",
    "no_formulate": "formulate",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rulebook", description="Build, formulate and test a rule manual.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log warnings and progress")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("build", "run the build stage"), ("formulate", "turn the built rules into a manual"),
                       ("test", "evaluate the manual on the unseen split"),
                       ("run", "build, formulate and test in one go")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="INI configuration file")
        p.add_argument("--backend", choices=("scripted", "http"))
        p.add_argument("--seed", type=int)
        p.add_argument("--out", dest="out_dir", help="output directory")
        p.add_argument("--tasks-per-type", type=int)
        p.add_argument("--workers", dest="test_workers", type=int, help="parallel test episodes")
        for flag in ABLATIONS:
            p.add_argument("--" + flag.replace("_", "-"), action="store_true")
        p.add_argument("--allow-deletes", action="store_true", help="let the Builder delete rules")
        if name == "build":
            p.add_argument("--resume", action="store_true", help="continue from the last checkpoint")
    p = sub.add_parser("replay", help="re-run a logged run without calling any model")
    p.add_argument("log", help="path to runlog.jsonl")
    p.add_argument("--config", help="refuse to replay unless the log matches this configuration")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    config = RunConfig.from_ini(args.config) if args.config else apply_env(RunConfig())
    changes = {"stage": "build" if args.command == "run" else args.command}
    for name in ("backend", "seed", "out_dir", "tasks_per_type", "test_workers"):
        value = getattr(args, name, None)
        if value is not None:
            changes[name] = value
    for flag, field_name in ABLATIONS.items():
        if getattr(args, flag, False):
            changes[field_name] = False
    if getattr(args, "allow_deletes", False):
        changes["builder_deletes"] = True
    return config.with_(**changes)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        if args.command == "replay":
            config = RunConfig.from_ini(args.config) if args.config else None
            report = replay(args.log, config)
            print(report.summary())
            return 0 if report.ok else 1
        config = config_from_args(args)
        if args.command == "build":
            result = run_build(config, resume=args.resume)
            print(f"build finished: {len(result.store)} rules written to {config.store_path}")
        elif args.command == "formulate":
            result = run_formulate(config)
            print(f"manual written to {config.manual_path}" if result.manual else "formulation disabled")
        else:
            result = run_all(config) if args.command == "run" else run_test(config)
            print(result.metrics.table())
            print(f"metrics written to {config.metrics_path}")
    except (ConfigurationError, LLMError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
