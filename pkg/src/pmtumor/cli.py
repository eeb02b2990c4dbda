"""`simulate` command line: one subcommand per stock experiment.

    simulate <subcommand> --config <path> [--out <dir>] [--cadence <k>]

Subcommands: barenblatt, vitro, vivo, twospecies, focusing, ap-sweep,
check-invariants.  Exit status: 0 success, 1 solver failure, 2 configuration
error, 3 assertion failure.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from .config import ConfigError, parse_config, with_overrides
from .core import SolverError
from .experiments import CheckFailure, ap_sweep, check_invariants, run_experiment

EXIT_OK = 0
EXIT_SOLVER = 1
EXIT_CONFIG = 2
EXIT_ASSERTION = 3

SUBCOMMANDS = (
    "barenblatt", "vitro", "vivo", "twospecies", "focusing", "ap-sweep",
    "check-invariants",
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="simulate",
        description="Porous-medium tumor growth simulations and diagnostics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", required=True, help="path to the configuration file")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--cadence", type=int, help="emit rows every k steps")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        cfg = parse_config(text)
        cfg = with_overrides(cfg, out_dir=args.out, cadence=args.cadence)

        command = args.command.replace("-", "_")
        if command == "check_invariants":
            for line in check_invariants(cfg):
                print(line)
            print("all invariants held")
            return EXIT_OK
        if command != cfg.kind:
            raise ConfigError(
                f"config is for {cfg.kind!r} but the {args.command} subcommand was invoked"
            )
        sink = ap_sweep(cfg) if command == "ap_sweep" else run_experiment(cfg)
        for key in sorted(sink.results):
            print(f"{key} = {sink.results[key]:.17g}")
        print(f"wrote {len(set(sink.files))} files to {sink.out_dir}")
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckFailure as exc:
        print(f"assertion failure: {exc}", file=sys.stderr)
        return EXIT_ASSERTION
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
