"""Command-line interface: run, preset, and validate subcommands."""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, load_config, preset_config, validate_config
from .engine import default_output_dir, run_experiment

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors; the contract is 1
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="unoma",
                     description="Unified-NOMA HUDN Monte-Carlo experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a config file")
    run.add_argument("--config", required=True, help="path to a JSON config")
    run.add_argument("--seed", type=int, default=None, help="override master seed")
    run.add_argument("--trials", type=int, default=None,
                     help="override trials per sweep point")
    run.add_argument("--output", default=None, help="output directory")
    run.add_argument("--workers", type=int, default=None,
                     help="override worker count")

    pre = sub.add_parser("preset", help="run a built-in case-study preset")
    pre.add_argument("--name", required=True, choices=["fig4", "fig5"])
    pre.add_argument("--output", default=None, help="output directory")
    pre.add_argument("--seed", type=int, default=None)
    pre.add_argument("--trials", type=int, default=None)
    pre.add_argument("--workers", type=int, default=None)

    val = sub.add_parser("validate", help="validate a config file")
    val.add_argument("--config", required=True, help="path to a JSON config")
    return parser


def _apply_overrides(config, args):
    data = dict(config.data)
    if getattr(args, "seed", None) is not None:
        data["seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        data["trials"] = args.trials
    if getattr(args, "workers", None) is not None:
        data["workers"] = args.workers
    return validate_config(data)


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE

    try:
        if args.command == "validate":
            load_config(args.config)
            print(f"{args.config}: ok")
            return EXIT_OK
        if args.command == "run":
            config = _apply_overrides(load_config(args.config), args)
        else:
            config = _apply_overrides(preset_config(args.name), args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    output = args.output if args.output is not None else default_output_dir()
    try:
        csv_path, manifest_path, _ = run_experiment(config, output)
    except Exception as exc:  # noqa: BLE001 - report and map to exit code
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {csv_path} and {manifest_path}")
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
