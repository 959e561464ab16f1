"""Command-line experiment runner.

`simulate <preset>` runs one of the presets and writes (or prints) the
result table as CSV.  Exit codes: 0 on success, 2 on configuration
errors, 3 when more than half of the requested runs failed.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .scenario import (ConfigError, build_array, load_scenario,
                       noise_variance)
from .channel import nf_channel
from .signals import constant_pilots, make_combiners, synthesize
from .harness import PRESETS, plan_for, run_monte_carlo


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="simulate",
        description="Near-field localization and sensing experiments.")
    parser.add_argument("preset", choices=PRESETS)
    parser.add_argument("--scenario", metavar="PATH",
                        help="scenario file (key = value lines) overriding "
                             "the built-in geometry")
    parser.add_argument("--seed", type=int, metavar="U64",
                        help="override the scenario's RNG seed")
    parser.add_argument("--trials", type=int, metavar="N",
                        help="Monte-Carlo trials per sweep point")
    parser.add_argument("--out", metavar="PATH.CSV",
                        help="write the result table here instead of stdout")
    parser.add_argument("--quick", action="store_true",
                        help="reduced sweep and trial counts, for smoke runs")
    parser.add_argument("--dump-channel", action="store_true",
                        help="also save the noise-free channel tensor (.npz)")
    parser.add_argument("--dump-observations", action="store_true",
                        help="also save one synthesized observation tensor "
                             "(.npz)")
    return parser


def _dump_stem(args) -> Path:
    return Path(args.out).with_suffix("") if args.out else Path(args.preset)


def _dump(args, config, paths) -> None:
    layout = build_array(config)
    channel = nf_channel(config, layout, paths)
    if args.dump_channel:
        np.savez(_dump_stem(args).with_suffix(".channel.npz"),
                 h=channel.h, frequencies=channel.frequencies)
    if args.dump_observations:
        combiners = make_combiners(
            config, rng=np.random.default_rng(config.rng_seed))
        pilots = constant_pilots(config)
        rng = np.random.default_rng(
            np.random.SeedSequence((config.rng_seed, 0, 0)))
        obs = synthesize(channel, combiners, pilots,
                         noise_variance_w=noise_variance(config), rng=rng)
        np.savez(_dump_stem(args).with_suffix(".observations.npz"),
                 y=obs.values, combiners=combiners.weights,
                 pilots=pilots.symbols)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        kwargs = {"quick": args.quick, "output_path": args.out}
        if args.scenario:
            config, paths = load_scenario(args.scenario)
            kwargs.update(config=config, paths=paths)
        if args.trials is not None:
            kwargs["trials"] = args.trials
        plan = plan_for(args.preset, **kwargs)
        if args.seed is not None:
            plan = replace(plan, config=replace(plan.config,
                                                rng_seed=args.seed))
    except (ConfigError, OSError) as exc:
        print(f"simulate: {exc}", file=sys.stderr)
        return 2

    table = run_monte_carlo(plan)
    if args.dump_channel or args.dump_observations:
        _dump(args, plan.config, plan.paths)
    if args.out is None:
        sys.stdout.write(table.to_csv())
    if table.failure_rate() > 0.5:
        print(f"simulate: {table.failure_rate():.0%} of runs failed",
              file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
