"""Command-line entry point: ``loophodge <scenario> [--config PATH] [flags]``.

Exit status is 0 when every check passes, 1 when a numeric check fails (the
report is still written) and 2 when the configuration is invalid (no report).
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from pathlib import Path

import numpy as np

from .config import BUILTIN_PREFIX, SCENARIOS, TOL_ENV, ConfigError, ScenarioConfig, builtin_configs, load, read_config
from .report import Report
from .scenarios import RUNNERS, Outcome

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

DEFAULT_CONFIGS = {
    "verify": "diagonal-verify.yaml",
    "period": "diagonal-period.yaml",
    "energy": "elliptic-energy.yaml",
    "cocycle": "cocycle.yaml",
    "embed-hodge": "embed-hodge.yaml",
    "fuzz": "fuzz.yaml",
}


def run(config: ScenarioConfig) -> Outcome:
    """Dispatch a validated configuration and time it."""
    start = time.perf_counter()
    try:
        outcome = RUNNERS[config.scenario](config)
    except ConfigError:
        raise
    except (ArithmeticError, RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
        # numeric breakdown: still emit a (failing) report
        rep = Report(config.id)
        rep.note("error", f"{type(exc).__name__}: {exc}")
        rep.add("numeric_breakdown", 1.0, 0.0)
        outcome = Outcome(rep)
    outcome.report.params = config.echo()
    outcome.report.runtime_ms = (time.perf_counter() - start) * 1e3
    return outcome


def write_report(report: Report, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = report.to_json() if path.suffix == ".json" else report.to_yaml()
    path.write_text(text)


def write_tables(tables: dict, folder: str | Path) -> list[Path]:
    folder = Path(folder)
    folder.mkdir(parents=True, exist_ok=True)
    written = []
    for name, (header, rows) in tables.items():
        target = folder / name
        with target.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
        written.append(target)
    return written


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="loophodge", description=__doc__.splitlines()[0])
    parser.add_argument("--list-configs", action="store_true", help="list packaged configs and exit")
    sub = parser.add_subparsers(dest="scenario")
    for name in SCENARIOS:
        p = sub.add_parser(name, help=f"run a {name} scenario")
        p.add_argument(
            "--config",
            help=f"YAML or JSON scenario file, or {BUILTIN_PREFIX}<name> (default {BUILTIN_PREFIX}{DEFAULT_CONFIGS[name]})",
        )
        p.add_argument("--window", type=int, help="Laurent truncation window N")
        p.add_argument("--tol", type=float, help=f"base tolerance (overrides config and ${TOL_ENV})")
        p.add_argument("--seed", type=int, help="RNG seed")
        p.add_argument("--out", help="report path; .json selects JSON, anything else YAML")
        p.add_argument("--csv-dir", help="directory for CSV field dumps")
        p.add_argument("--quiet", action="store_true", help="suppress the per-check summary")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.list_configs:
        for name in builtin_configs():
            print(f"{BUILTIN_PREFIX}{name}")
        return EXIT_OK
    if args.scenario is None:
        parser.print_help(sys.stderr)
        return EXIT_CONFIG

    source = args.config or BUILTIN_PREFIX + DEFAULT_CONFIGS[args.scenario]
    try:
        data = read_config(source)
        overrides = {"window": args.window, "tol": args.tol, "seed": args.seed}
        cfg = load(data, args.scenario, overrides)
        outcome = run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    report = outcome.report
    out = args.out or cfg.raw.get("output", {}).get("report")
    csv_dir = args.csv_dir or cfg.raw.get("output", {}).get("csv_dir")
    if out:
        write_report(report, out)
    else:
        sys.stdout.write(report.to_yaml())
    if csv_dir:
        write_tables(outcome.tables, csv_dir)
    if not args.quiet:
        for line in report.summary_lines():
            print(line, file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
