"""Command-line interface.

    upm-sim run <benchmark> [--profile FILE] [--seed N]
                [--grid KEY=V1,V2,...] [--out FILE.csv] [--format csv|table]
    upm-sim verify [--profile FILE] [--seed N]
    upm-sim profile dump [--profile FILE]

UPM_SIM_SEED sets the default seed. Exit codes: 0 success, 1 usage error,
2 verification failure.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import harness, units
from .machine import (ProfileParseError, ProfileValidationError,
                      builtin_mi300a, load_profile, serialize_profile)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _load(path: str | None):
    if path is None:
        return builtin_mi300a()
    with open(path, "r", encoding="utf-8") as fh:
        return load_profile(fh.read())


def _parse_grid_value(text: str):
    for caster in (int, float):
        try:
            return caster(text)
        except ValueError:
            pass
    try:
        return units.parse_value(text, units.BYTES)
    except units.UnitError:
        return text


def _parse_grid(items: list[str]) -> dict:
    grid: dict = {}
    for item in items:
        if "=" not in item:
            raise harness.UsageError(
                f"grid item {item!r} must look like KEY=V1,V2,...")
        key, _, values = item.partition("=")
        grid[key.strip()] = [_parse_grid_value(v) for v in values.split(",")]
    return grid


def _build_parser() -> _Parser:
    parser = _Parser(prog="upm-sim",
                     description="Unified-memory APU memory-subsystem "
                                 "simulator")
    default_seed = int(os.environ.get("UPM_SIM_SEED", "0"))
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one benchmark grid")
    p_run.add_argument("benchmark", type=harness.canonical_benchmark,
                       choices=harness.BENCHMARK_NAMES,
                       metavar="|".join(harness.BENCHMARK_NAMES))
    p_run.add_argument("--profile", default=None, metavar="FILE")
    p_run.add_argument("--seed", type=int, default=default_seed)
    p_run.add_argument("--grid", action="append", default=[],
                       metavar="KEY=V1,V2,...")
    p_run.add_argument("--out", default=None, metavar="FILE.csv")
    p_run.add_argument("--format", choices=("csv", "table"), default="csv")

    p_verify = sub.add_parser("verify", help="check anchored expectations")
    p_verify.add_argument("--profile", default=None, metavar="FILE")
    p_verify.add_argument("--seed", type=int, default=default_seed)

    p_prof = sub.add_parser("profile", help="profile utilities")
    prof_sub = p_prof.add_subparsers(dest="profile_command", required=True)
    p_dump = prof_sub.add_parser("dump", help="print the effective profile")
    p_dump.add_argument("--profile", default=None, metavar="FILE")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        profile = _load(getattr(args, "profile", None))
    except (OSError, ProfileParseError, ProfileValidationError) as exc:
        print(f"upm-sim: profile error: {exc}", file=sys.stderr)
        return 1

    if args.command == "run":
        try:
            spec = harness.WorkloadSpec(benchmark=args.benchmark,
                                        grid=_parse_grid(args.grid),
                                        seed=args.seed)
            rows = harness.run(profile, spec)
            text = harness.report(rows, args.format)
        except harness.UsageError as exc:
            print(f"upm-sim: {exc}", file=sys.stderr)
            return 1
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        return 0

    if args.command == "verify":
        report = harness.verify(profile, seed=args.seed)
        for line in report.lines():
            print(line)
        return 2 if report.hard_failures else 0

    if args.command == "profile" and args.profile_command == "dump":
        sys.stdout.write(serialize_profile(profile))
        return 0
    return 1


if __name__ == "__main__":
    sys.exit(main())
