"""Command-line entry point: run, verify, figure-data.

Exit codes: 0 ok, 1 config error, 2 invariant violation, 3 stuck episode.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .figures import FIGURES, IncompatibleScenario, figure_data
from .scenario import ConfigError, bundled_path, bundled_scenarios, load_scenario
from .simulation import run_scenario, write_artifacts
from .verify import check_config, check_run, verify

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT, EXIT_STUCK = 0, 1, 2, 3


def _resolve(name: str) -> Path:
    path = Path(name)
    if path.exists():
        return path
    bundled = bundled_path(name)
    if bundled.exists():
        return bundled
    raise ConfigError(f"no scenario file {name!r} (bundled: {', '.join(bundled_scenarios())})")


def cmd_run(args) -> int:
    config = load_scenario(_resolve(args.scenario))
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    problems = check_config(config)
    if problems:
        for p in problems:
            print(f"unsatisfiable config: {p}", file=sys.stderr)
        return EXIT_CONFIG
    result = run_scenario(config)
    paths = write_artifacts(result, args.out)
    report = check_run(result)
    s = result.summary
    if s is not None:
        print(f"{config.name or config.kind}: {s.requests.total} requests, {s.errors} errors, "
              f"availability {s.availability:.6%}, {s.migrations.total} migrations")
    for line in report.lines():
        if not line.startswith("PASS"):
            print(line, file=sys.stderr)
    print(f"artifacts in {Path(args.out)} ({len(paths)} files)")
    return report.exit_code


def cmd_verify(args) -> int:
    report = verify(_resolve(args.scenario), max_duration_s=args.max_duration)
    for line in report.lines():
        print(line)
    return report.exit_code


def cmd_figure(args) -> int:
    try:
        path = figure_data(args.dirs, args.figure, args.out)
    except IncompatibleScenario as exc:
        print(f"incompatible scenario: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fogdomain", description="Simulate one fog orchestration domain.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and write artifacts")
    run.add_argument("scenario", help="scenario file or bundled scenario name")
    run.add_argument("--out", required=True, help="artifact directory")
    run.add_argument("--seed", type=int, default=None)
    run.set_defaults(func=cmd_run)

    ver = sub.add_parser("verify", help="check protocol and data-plane invariants on a short run")
    ver.add_argument("scenario")
    ver.add_argument("--max-duration", type=float, default=600.0, help="cap on simulated workload seconds")
    ver.set_defaults(func=cmd_verify)

    fig = sub.add_parser("figure-data", help="write plot-ready CSV series from run directories")
    fig.add_argument("dirs", nargs="+")
    fig.add_argument("--figure", required=True, choices=FIGURES)
    fig.add_argument("--out", default=None, help="output directory (default: first run directory)")
    fig.set_defaults(func=cmd_figure)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
