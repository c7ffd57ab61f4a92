"""Command-line entry point.

Each pipeline stage is a subcommand operating on ``<out>/<run_id>/``; ``run``
executes all of them. Exit codes: 0 success, 1 validation error, 2 numeric
error, 3 I/O error, 4 network error.
"""
from __future__ import annotations

import argparse
import logging
import sys

from . import store
from .config import STAGES, PipelineConfig, dumps, load_config
from .errors import (
    ConfigurationError,
    NotFoundError,
    NumericError,
    SimEnhanceError,
    TransportError,
    ValidationError,
)
from .pipeline import PLOT_VIEWS, RunDir, StageError, emit_plot_data, run_pipeline, run_stage

log = logging.getLogger("simenhance")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC, EXIT_IO, EXIT_NETWORK = 0, 1, 2, 3, 4


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        exc = exc.cause
    if isinstance(exc, (TransportError, ConfigurationError)):
        return EXIT_NETWORK
    if isinstance(exc, NumericError):
        return EXIT_NUMERIC
    if isinstance(exc, ValidationError):
        return EXIT_VALIDATION
    if isinstance(exc, (NotFoundError, OSError)):
        return EXIT_IO
    return EXIT_VALIDATION


def _global_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="pipeline config file (INI); defaults apply when omitted")
    p.add_argument("--seed", type=int, help="master seed, overrides [seeds] master")
    p.add_argument("--out", help="output root, overrides [io] out")
    p.add_argument("--resume", action="store_true", help="skip stages already completed for this config")
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="simenhance", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for stage in STAGES:
        _global_flags(sub.add_parser(stage, help=f"run the {stage} stage"))
    _global_flags(sub.add_parser("run", help="run the full pipeline"))
    p = sub.add_parser("emit-plots", help="write plot-ready CSVs for a run")
    _global_flags(p)
    p.add_argument("--run-id", help="run directory name under --out (default: from config)")
    p.add_argument("--which", nargs="+", choices=PLOT_VIEWS, default=list(PLOT_VIEWS))
    p = sub.add_parser("default-config", help="print the default config file")
    _global_flags(p)
    p = sub.add_parser("push", help="push a run's reference series to a line-protocol write endpoint")
    _global_flags(p)
    p.add_argument("--url", required=True)
    p.add_argument("--token", required=True)
    p.add_argument("--series", default="reference.csv", help="series CSV inside the run directory")
    p.add_argument("--measurement", default="telemetry")
    p.add_argument("--gzip", action="store_true")
    return parser


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    return cfg.with_overrides(seed=args.seed, out=args.out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        cfg = _config(args)
        if args.command == "default-config":
            sys.stdout.write(dumps(cfg))
        elif args.command == "run":
            _, manifest = run_pipeline(cfg, resume=args.resume)
            print(RunDir(cfg).path / "manifest.json")
        elif args.command == "emit-plots":
            run_dir = RunDir(cfg).path.parent / (args.run_id or cfg.run_id)
            for path in emit_plot_data(run_dir, args.which).values():
                print(path)
        elif args.command == "push":
            run = RunDir(cfg)
            series = run.read_series(args.series)
            ack = store.push_series(args.url, args.token, series, measurement=args.measurement,
                                    compress=args.gzip)
            print(f"HTTP {ack.status} after {ack.attempts} attempt(s), {ack.lines} lines")
        else:
            run = run_stage(cfg, args.command, resume=args.resume)
            print(run.path)
    except (SimEnhanceError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code_for(exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
