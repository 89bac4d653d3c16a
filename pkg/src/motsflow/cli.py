"""Command-line entry point: ``motsflow SUBCOMMAND [options]``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .config import COMMANDS, ConfigError, RunConfig, load_config
from .initial_data import InvalidDataError
from .runner import EXIT_INVALID, InvalidRun, run
from .solver import PreconditionError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="motsflow", description="Locate outermost MOTS in "
                                     "spherically symmetric initial data by regularized level-set continuation.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", metavar="PATH", help="INI run configuration (see schema.ini)")
    parser.add_argument("--out", metavar="DIR", help="output directory (overrides [run] out)")
    parser.add_argument("--serial", action="store_true", help="run sweeps in a single process")
    parser.add_argument("--verbose", action="store_true", help="log solver progress")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
    except ConfigError as exc:
        for msg in exc.messages:
            print(f"config error: {msg}", file=sys.stderr)
        return EXIT_INVALID
    cfg = replace(cfg, command=args.command)
    try:
        result, code = run(cfg, args.out, serial=args.serial)
    except (ConfigError, InvalidRun) as exc:
        for msg in exc.messages:
            print(f"error: {msg}", file=sys.stderr)
        return EXIT_INVALID
    except (InvalidDataError, PreconditionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if isinstance(result, list):
        for msg in result:
            print(f"violation: {msg}", file=sys.stderr if code else sys.stdout)
        if not result:
            print("valid")
        return code
    line = f"{cfg.command}: {result.status}"
    if result.mots_radius_detected is not None or result.mots_radius_oracle is not None:
        line += f" (detected {result.mots_radius_detected}, oracle {result.mots_radius_oracle})"
    print(line)
    return code


if __name__ == "__main__":
    sys.exit(main())
