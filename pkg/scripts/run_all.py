#!/usr/bin/env python3
"""Run every experiment preset in sequence into one results directory.

Full fidelity takes a few hours single-threaded; pass --quick for a
minutes-scale smoke run of the same pipeline.
"""

import argparse
import sys
from pathlib import Path

from nfloc.harness import PRESETS

from run_experiment import run


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="results", type=Path)
    parser.add_argument("--quick", action="store_true")
    parser.add_argument("--trials", type=int)
    args = parser.parse_args(argv)
    worst = 0
    for preset in PRESETS:
        print(f"== {preset} ==")
        code = run(preset, args.out_dir, args.quick, args.trials,
                   seed=None, scenario=None)
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
