"""Command-line entry point: ``sbnd <command> --config <file> [options]``.

Exit codes: 0 on success, 2 on configuration errors, 3 on numerical
failures (eigensolver non-convergence or a violated variational bound).
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .commands import COMMANDS, cmd_absnd_train, cmd_snd_train
from .config import ConfigError, parse_config
from .records import NumericalFailure, write_csv, write_manifest

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sbnd",
        description="Ground-state energy experiments via sample-based neural diagonalization",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name, help=f"run the {name} pipeline")
        cmd.add_argument("--config", required=True, help="TOML run configuration")
        cmd.add_argument("--seed", type=int, default=None, help="override the master seed")
        cmd.add_argument("--out", default="sbnd-out", help="output directory")
        if name in ("sbd-gs", "scan-h", "required-s"):
            cmd.add_argument(
                "--rotations",
                action="store_true",
                help="optimize adaptive single-spin rotations on every drawn set",
            )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config, seed_override=args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if getattr(args, "rotations", False):
        cfg = dataclasses.replace(cfg, rotations=True)
    out_dir = Path(args.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "snd-train":
            records = cmd_snd_train(cfg, out_dir=out_dir)
        elif args.command == "absnd-train":
            records = cmd_absnd_train(cfg, out_dir=out_dir)
        else:
            records = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    csv_path = out_dir / "results.csv"
    write_csv(csv_path, records)
    write_manifest(out_dir / "manifest.json", cfg.raw, cfg.master_seed, args.command)
    print(f"wrote {len(records)} rows to {csv_path}")
    for rec in records:
        print(
            f"  {rec.method} h={rec.h:g} S={rec.s_unique} "
            f"E={rec.energy:.8f} eps={rec.rel_error:.3e}"
        )
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
