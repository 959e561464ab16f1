"""Command-line figure renderer.

`plot <preset> --in results.csv --out fig.png` draws one figure analog
from a simulator result table.  Exit codes: 0 on success, 2 on any input
problem (unreadable table, wrong schema, missing series).
"""

from __future__ import annotations

import argparse
import sys

from .figures import PRESETS, FigureSpec, MissingSeriesError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plot", description="Render figure analogs from result tables.")
    parser.add_argument("preset", choices=PRESETS)
    parser.add_argument("--in", dest="input_path", required=True,
                        metavar="RESULTS.CSV")
    parser.add_argument("--out", dest="output_path", required=True,
                        metavar="FIG.PNG")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    spec = FigureSpec(args.preset, args.input_path, args.output_path)
    try:
        render(spec)
    except MissingSeriesError as exc:
        print(f"plot: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"plot: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
