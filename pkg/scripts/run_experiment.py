#!/usr/bin/env python3
"""Run one experiment preset end to end: simulate to CSV, then render.

The simulation and the figure are separate programs glued only by the
CSV table, so either half can be rerun on its own.  Rendering is skipped
with a note if the plotting package is not installed.
"""

import argparse
import sys
from pathlib import Path

from nfloc.cli import main as simulate
from nfloc.harness import PRESETS

STEM = {"rmse-vs-power": "rmse_vs_power", "bias-map": "bias_map",
        "cost-curve": "cost_curve", "detection-accuracy": "detection_accuracy"}


def run(preset: str, out_dir: Path, quick: bool, trials: int | None,
        seed: int | None, scenario: str | None) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    table = out_dir / f"{STEM[preset]}.csv"
    argv = [preset, "--out", str(table)]
    if quick:
        argv.append("--quick")
    if trials is not None:
        argv += ["--trials", str(trials)]
    if seed is not None:
        argv += ["--seed", str(seed)]
    if scenario is not None:
        argv += ["--scenario", scenario]
    code = simulate(argv)
    if code != 0:
        return code
    print(f"wrote {table}")
    try:
        from plotkit.cli import main as plot
    except ImportError:
        print("plotkit not installed; skipping the figure", file=sys.stderr)
        return 0
    figure = table.with_suffix(".png")
    code = plot([preset, "--in", str(table), "--out", str(figure)])
    if code == 0:
        print(f"wrote {figure}")
    return code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("preset", choices=PRESETS)
    parser.add_argument("--out-dir", default="results", type=Path)
    parser.add_argument("--quick", action="store_true",
                        help="reduced sweep and trial counts")
    parser.add_argument("--trials", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--scenario", help="scenario file overriding the "
                                           "built-in geometry")
    args = parser.parse_args(argv)
    return run(args.preset, args.out_dir, args.quick, args.trials, args.seed,
               args.scenario)


if __name__ == "__main__":
    sys.exit(main())
