"""Command-line entry point: hypolab <command> --config <file> [options]."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import COMMANDS, ConfigError, parse_config, validate_config
from .harness import EXIT_CONFIG, run


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hypolab",
        description="Numerical experiments on hypoelliptic diffusions: "
                    "distances, kernels, hitting probabilities, bridges.")
    parser.add_argument("command", choices=COMMANDS,
                        help="experiment command (must match the config)")
    parser.add_argument("--config", help="experiment config file")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--workers", type=int, help="override worker count")
    parser.add_argument("--out", help="override the output directory")
    parser.add_argument("--suite", choices=("quick", "full"),
                        help="suite for audit-all (overrides the config)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.config is None:
        if args.command == "audit-all":
            text = "[experiment]\ncommand = audit-all\n\n[audit-all]\nsuite = quick\n"
        else:
            print("error: --config is required", file=sys.stderr)
            return EXIT_CONFIG
    else:
        path = Path(args.config)
        if not path.exists():
            print(f"error: config file {path} not found", file=sys.stderr)
            return EXIT_CONFIG
        text = path.read_text()

    try:
        cfg = parse_config(text)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if cfg.command != args.command:
        print(f"config error: config declares command {cfg.command!r}, "
              f"CLI invoked {args.command!r}", file=sys.stderr)
        return EXIT_CONFIG
    cfg.override(seed=args.seed, workers=args.workers, out=args.out)
    if args.suite is not None:
        cfg.sections.setdefault("audit-all", {})["suite"] = args.suite
    try:
        validate_config(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    status = run(cfg)
    summary = Path(cfg.out) / "summary.txt"
    if summary.exists():
        sys.stdout.write(summary.read_text())
    return status


if __name__ == "__main__":
    sys.exit(main())
