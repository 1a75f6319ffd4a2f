"""Command-line entry point: ``stabprop <subcommand> --config cfg.yaml``."""
from __future__ import annotations

import argparse
import logging
import sys

from . import experiments as ex
from .errors import StabPropError

SUBCOMMANDS = {
    "propagate": ("propagate", "propagate inputs through a saved network"),
    "train": ("train", "train one MLP or PNN and save it"),
    "eval-tv": ("tv", "1-TV of propagation methods against a sampling oracle"),
    "eval-w1": ("w1", "Wasserstein-1 of propagation methods, plus the single-ReLU curve"),
    "eval-interval": ("interval", "prediction intervals selected by validation coverage"),
    "eval-selective": ("selective", "risk-coverage curves on an in-distribution/OOD mix"),
    "two-moons": ("two_moons", "uncertainty map of a two-moons classifier"),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stabprop", description=__doc__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in SUBCOMMANDS.items():
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", help="YAML or JSON config file")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--out", help="output directory (overrides the config)")
        sp.add_argument("--smoke", action="store_true", help="scaled-down run for quick checks")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    kind = SUBCOMMANDS[args.command][0]
    try:
        overrides = ex.load_config_file(args.config)
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.out is not None:
            overrides["out"] = args.out
        cfg = ex.make_config(kind, overrides, smoke=args.smoke)
        ex.RUNNERS[kind](cfg)
    except (StabPropError, ValueError, OSError) as exc:
        print(f"stabprop {args.command}: error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote results to {cfg['out']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
