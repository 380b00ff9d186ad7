"""Command-line driver: ``ilpfspn run | sweep | oracle``.

Exit codes: 0 ok, 2 configuration error, 3 simulation abort, 4 I/O error.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from . import configfile, report
from .configfile import ConfigFileError, ExperimentFile
from .experiments import run_simulation, sweep, vp_speedup_bound
from .kernel import SimulationError, TraceWriter
from .pipeline import PLACE_NAMES, ConfigError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ABORT = 3
EXIT_IO = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _u64(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed out of range: {text!r}")
    return value


def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ilpfspn", description="Fluid Petri net simulator of a speculative ILP pipeline.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="experiment file (TOML)")
    common.add_argument("--set", metavar="KEY=VALUE", action="append", default=[], dest="overrides",
                        help="override a [model] field; repeatable")
    common.add_argument("--out", metavar="PATH", help="output file (run: summary, sweep: CSV)")

    run = sub.add_parser("run", parents=[common], help="simulate one program run")
    run.add_argument("--seed", type=_u64, help="RNG seed (overrides model.seed)")
    run.add_argument("--trace", metavar="PATH", help="write a tab-separated event trace")

    sw = sub.add_parser("sweep", parents=[common], help="run the [sweep] grid and write a CSV table")
    sw.add_argument("--seed", type=_u64, help="base seed of the replications")
    sw.add_argument("--svg", metavar="PATH", help="write <stem>_<metric>.svg line plots")
    sw.add_argument("--jobs", type=_positive, default=1, help="worker processes")

    orc = sub.add_parser("oracle", help="print the value-prediction bound W/(W - mu_i)")
    orc.add_argument("W", type=int)
    orc.add_argument("mu_i", type=float)
    return parser


def _load(args) -> ExperimentFile:
    exp = configfile.load(args.config) if args.config else ExperimentFile()
    if args.overrides:
        exp = exp.replace(model=configfile.apply_overrides(exp.model, args.overrides))
    return exp


def _emit(text: str, path: Optional[str]) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def cmd_run(args) -> int:
    exp = _load(args)
    model = exp.model if args.seed is None else exp.model.replace(seed=args.seed)
    trace_path = args.trace or exp.trace
    if trace_path:
        with open(trace_path, "w", encoding="utf-8", newline="\n") as fh:
            result = run_simulation(model, trace=TraceWriter(fh, PLACE_NAMES))
    else:
        result = run_simulation(model)
    _emit(result.summary() + "\n", args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    exp = _load(args)
    if not exp.sweep:
        raise ConfigFileError("a [sweep] section with at least one axis is required", "[sweep]")
    base_seed = exp.base_seed if args.seed is None else args.seed
    try:
        table = sweep(exp.sweep, exp.model, exp.n, base_seed, baseline=exp.baseline, jobs=args.jobs)
    except ConfigError as exc:
        raise ConfigFileError(str(exc), f"grid point field {exc.field}", exc.field) from exc
    _emit(report.format_csv(table), args.out or exp.csv)
    svg = args.svg or exp.svg
    if svg:
        report.write_svgs(table, svg)
    return EXIT_OK


def cmd_oracle(args) -> int:
    try:
        bound = vp_speedup_bound(args.W, args.mu_i)
    except ValueError as exc:
        raise ConfigFileError(str(exc)) from exc
    print(report.fmt6(bound))
    return EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "oracle": cmd_oracle}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigFileError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationError as exc:
        print(f"simulation aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except ValueError as exc:
        # sweep axis validation and plotting preconditions
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
