#!/usr/bin/env python3
"""Run the bundled experiment configs and plot their metrics.

    python3 scripts/run_experiments.py                    # every config, default seeds
    python3 scripts/run_experiments.py gridworld car      # a subset
    python3 scripts/run_experiments.py smoke --seeds 0..1 --jobs 4
"""
import argparse
import sys
from pathlib import Path

from polid.harness.cli import main as polid

HERE = Path(__file__).resolve().parent
CONFIGS = sorted(p.stem for p in (HERE / "configs").glob("*.json"))
PLOTS = {"minigolf_strategies": ["return", "match"]}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("names", nargs="*", help=f"configs to run (default: all but smoke); one of {CONFIGS}")
    ap.add_argument("--out", default="results")
    ap.add_argument("--seeds", help="inclusive seed range S0..S1")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args(argv)
    names = args.names or [c for c in CONFIGS if c != "smoke"]
    unknown = sorted(set(names) - set(CONFIGS))
    if unknown:
        ap.error(f"unknown configs: {', '.join(unknown)}")
    status = 0
    for name in names:
        cmd = ["run", str(HERE / "configs" / f"{name}.json"), "--out", args.out, "--jobs", str(args.jobs)]
        if args.seeds:
            cmd += ["--seeds", args.seeds]
        print(f"== {name}", flush=True)
        code = polid(cmd)
        if code:
            status = code
            continue
        report = Path(args.out) / f"{name}.csv"
        for metric in PLOTS.get(name, ["alpha", "beta", "match"]):
            if polid(["plot", str(report), "--metric", metric]) != 0:
                print(f"   (no {metric} plot for {name})", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
