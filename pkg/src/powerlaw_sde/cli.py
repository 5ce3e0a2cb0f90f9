"""Command line interface.

Subcommands:
    run              execute the experiment named in the config and write its
                     artifacts (atomically) into the output directory
    validate         check all invariants plus advisory checks, run nothing
    list-experiments print the available experiment names

Exit codes: 0 success, 2 validation error, 3 runtime numeric error.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile

from .config import ConfigError, EXPERIMENTS, apply_overrides, load_config, resolve
from .errors import ParameterError, SimulationError
from .experiments import advisory_checks, run_experiment

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


def _write_atomic(out_dir: str, name: str, content: str) -> None:
    # temp file in the target directory + rename: readers never see partials
    fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=out_dir)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(content)
        os.replace(tmp, os.path.join(out_dir, name))
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _resolved(args) -> "ResolvedConfig":
    doc = load_config(args.config)
    overrides = list(args.override or [])
    if args.seed is not None:
        overrides.append(f"simulation.base_seed={int(args.seed)}")
    doc = apply_overrides(doc, overrides)
    return resolve(doc, out_override=args.out)


def cmd_run(args) -> int:
    try:
        cfg = _resolved(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        files = run_experiment(cfg)
    except (ParameterError, ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (SimulationError, FloatingPointError, OverflowError, ZeroDivisionError) as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    os.makedirs(cfg.out_dir, exist_ok=True)
    for name, content in sorted(files.items()):
        _write_atomic(cfg.out_dir, name, content)
    for name in sorted(files):
        print(os.path.join(cfg.out_dir, name))
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        cfg = _resolved(args)
    except ConfigError as e:
        print(f"invalid: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    notes = advisory_checks(cfg)
    print(f"valid; experiment '{cfg.experiment['name']}'")
    for note in notes:
        print(note)
    return EXIT_OK


def cmd_list(_args) -> int:
    for name in EXPERIMENTS:
        print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="powerlaw-sde",
        description="Simulate and cross-validate the power-law SDE: stationary "
                    "law, coupling contraction, and first exit times.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("config_pos", nargs="?", metavar="CONFIG",
                       help="config JSON path (alternative to --config)")
        p.add_argument("--config", help="config JSON path")
        p.add_argument("--override", action="append", metavar="KEY=VALUE",
                       help="dotted-path override, repeatable")
        p.add_argument("--out", help="output directory (overrides output.directory)")
        p.add_argument("--seed", type=int, help="alias for simulation.base_seed")

    p_run = sub.add_parser("run", help="run the configured experiment")
    add_common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_val = sub.add_parser("validate", help="validate a config without running")
    add_common(p_val)
    p_val.set_defaults(func=cmd_validate)

    p_list = sub.add_parser("list-experiments", help="list experiment names")
    p_list.set_defaults(func=cmd_list)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if hasattr(args, "config_pos"):
        args.config = args.config or args.config_pos
        if not args.config:
            print("error: a config path is required", file=sys.stderr)
            return EXIT_VALIDATION
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
