"""Command line: ``polid run <config.json>`` and ``polid plot <report.csv> --metric ...``."""
from __future__ import annotations

import argparse
import logging
import re
import sys

from .config import ConfigError, ExperimentConfig
from .plot import METRIC_COLUMNS, PlotError, emit_plot
from .runner import run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_RUN = 0, 2, 3

log = logging.getLogger("polid")


def _seed_range(text: str) -> list[int]:
    m = re.fullmatch(r"(\d+)(?:\.\.(\d+))?", text.strip())
    if not m:
        raise ConfigError(f"--seeds expects S0..S1 or a single seed, got {text!r}")
    a = int(m.group(1))
    b = int(m.group(2)) if m.group(2) is not None else a
    if b < a:
        raise ConfigError("--seeds range is empty")
    return list(range(a, b + 1))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="polid", description="Policy space identification experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config")
    run.add_argument("--out", help="output directory (overrides the config)")
    run.add_argument("--seeds", help="inclusive seed range S0..S1 (overrides the config)")
    run.add_argument("--jobs", type=int, default=1, help="worker processes")
    run.add_argument("--wallclock", action="store_true", help="record timings (output is then not byte-stable)")
    plot = sub.add_parser("plot", help="plot a report's aggregates as SVG")
    plot.add_argument("report")
    plot.add_argument("--metric", required=True, choices=sorted(METRIC_COLUMNS))
    plot.add_argument("--out", help="SVG path")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _run(args) -> int:
    try:
        cfg = ExperimentConfig.load(args.config)
        if args.seeds:
            cfg.seeds = _seed_range(args.seeds)
        if args.out:
            cfg.out_dir = args.out
        if args.wallclock:
            cfg.record_wallclock = True
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        cfg.validate()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        report = run_experiment(cfg, jobs=args.jobs)
        csv_path, _ = report.write(cfg.out_dir, cfg.name or cfg.env)
    except Exception as exc:
        log.exception("run failed")
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUN
    print(csv_path)
    if report.failures:
        print(f"{report.failures} row(s) failed; see the .jsonl file", file=sys.stderr)
    return EXIT_OK


def _plot(args) -> int:
    try:
        path = emit_plot(args.report, args.metric, args.out)
    except (PlotError, OSError, KeyError, ValueError) as exc:
        print(f"plot error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(path)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return _run(args) if args.command == "run" else _plot(args)


if __name__ == "__main__":
    sys.exit(main())
