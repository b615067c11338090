"""Command-line entry point.

``sasnet run CONFIG``      run a scenario, write trace.ndjson and plan.csv
``sasnet check PLAN``      whole-plan separation check of a planning table
``sasnet encode [PLAN]``   dump the encoded arrival net as JSON
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import emulator as em
from .aircraft.model import FixtureError, bundled_plan, default_fixture, plan_safety, read_plan
from .aircraft.net import build_arrival_net
from .scenario import RunConfig, ScenarioError, export_trace, run_scenario


def _read_table(path: str | None):
    if path is None:
        return bundled_plan()
    return read_plan(Path(path).read_text())


def cmd_run(args) -> int:
    config = RunConfig.load(args.config, seed=args.seed)
    report = run_scenario(config)
    trace, plan = export_trace(report, args.out)
    print(f"adaptations: {len(report.adaptations)}")
    for item in report.adaptations:
        print(f"  cycle {item['cycle']}: {item['plan']} (aircraft {item['subject']})")
    if report.preexisting:
        print(f"pre-existing violations (not caused by the loop): {len(report.preexisting)}")
        for v in report.preexisting:
            print(f"  {v.phase} {v.resource}: {v.leader} -> {v.follower} gap {v.gap} < required {v.required}")
    if report.adapted_violations:
        print(f"violations involving replanned aircraft: {len(report.adapted_violations)}")
    if report.unresolved:
        print("the loop ended with an unresolved violation")
    print(f"trace: {trace}")
    print(f"plan:  {plan}")
    return report.exit_code


def cmd_check(args) -> int:
    violations = plan_safety(_read_table(args.plan), default_fixture().separation)
    for v in violations:
        print(f"{v.phase} {v.resource}: {v.leader} -> {v.follower} gap {v.gap}, required {v.required}")
    print(f"{len(violations)} violation(s)")
    return 1 if violations else 0


def cmd_encode(args) -> int:
    fixture = default_fixture(_read_table(args.plan))
    text = em.dumps(em.encode(build_arrival_net(fixture)))
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sasnet", description="Self-adaptive arrival planning on emulated Petri nets")
    parser.add_argument("--verbose", "-v", action="store_true", help="log loop internals to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario configuration")
    run.add_argument("config")
    run.add_argument("--seed", type=int, default=None, help="override the configuration's seed")
    run.add_argument("--out", default="out", help="output directory (default: ./out)")
    run.set_defaults(func=cmd_run)

    check = sub.add_parser("check", help="check a planning table for separation violations")
    check.add_argument("plan", nargs="?", default=None, help="CSV planning table (default: bundled table)")
    check.set_defaults(func=cmd_check)

    encode = sub.add_parser("encode", help="print the encoded arrival net")
    encode.add_argument("plan", nargs="?", default=None, help="CSV planning table (default: bundled table)")
    encode.add_argument("--out", default=None, help="write to a file instead of stdout")
    encode.set_defaults(func=cmd_encode)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ScenarioError, FixtureError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
