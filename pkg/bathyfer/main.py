"""Command-line entry point: ``bathyfer <command> --config run.json``."""

import argparse
import json
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from bathyfer import __version__
from bathyfer.configs.run_config import DomainConfig, RunConfig, load_run_config, run_config_schema
from bathyfer.configs.settings import LOG_LEVELS, Config
from bathyfer.core.errors import (
    BathyferError,
    CalibrationError,
    FitError,
    InferenceError,
    InputError,
    NumericalError,
)
from bathyfer.core.experiments import ExperimentRunner, fit_report, write_report

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INFERENCE = 3
EXIT_NUMERICAL = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bathyfer", description="Bayesian bathymetry reconstruction from wave-gauge series")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def run_options(p: argparse.ArgumentParser):
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--seed", type=int, help="master seed for every chain (overrides the config)")
        p.add_argument("--threads", type=int, help="worker threads for chains and grid evaluations")
        p.add_argument("--log-level", choices=LOG_LEVELS, help="logging level (default BATHYFER_LOG_LEVEL)")

    run_options(sub.add_parser("simulate", help="synthesize noisy gauge measurements from a known bed"))
    run_options(sub.add_parser("calibrate", help="estimate per-sensor noise variances against a flat bed"))
    run_options(sub.add_parser("infer", help="run the multichain sampler and write a result bundle"))
    sweep = sub.add_parser("sweep", help="infer a series of synthetic bumps of varying position or width")
    run_options(sweep)
    sweep.add_argument("--vary", choices=("position", "width"), help="swept bump parameter")
    sweep.add_argument("--values", type=float, nargs="+", help="target values of the swept parameter")
    run_options(sub.add_parser("landscape", help="evaluate the log posterior on a (b_p, b_w) grid"))

    report = sub.add_parser("report", help="summarize an infer bundle")
    report.add_argument("bundle", help="directory written by 'bathyfer infer'")
    report.add_argument("--log-level", choices=LOG_LEVELS)

    fit = sub.add_parser("fit", help="least-squares Gaussian bump fit of a bathymetry file")
    fit.add_argument("--truth", required=True, help="CSV with x,b columns")
    fit.add_argument("--config", help="run configuration supplying the reconstruction grid")
    fit.add_argument("--log-level", choices=LOG_LEVELS)

    sub.add_parser("schema", help="print the run-configuration JSON schema")
    return parser


def apply_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["chains"] = config.chains.model_copy(update={"seeds": [args.seed]})
    if getattr(args, "threads", None) is not None:
        if args.threads < 1:
            raise InputError("--threads must be at least 1")
        updates["threads"] = args.threads
    return config.model_copy(update=updates) if updates else config


def run(args: argparse.Namespace, settings: Config) -> None:
    if args.command == "schema":
        print(json.dumps(run_config_schema(), indent=2))
        return

    if args.command == "report":
        tables = write_report(args.bundle)
        print(tables["metrics"].to_string(index=False))
        return

    if args.command == "fit":
        domain = load_run_config(args.config).domain if args.config else DomainConfig()
        result = fit_report(args.truth, domain.reconstruction_grid())
        for name, value in result.items():
            print(f"{name:<14} {value:.6g}")
        return

    config = apply_overrides(load_run_config(args.config), args)
    runner = ExperimentRunner(config, settings, out_dir=args.out, threads=config.threads)
    if args.command == "simulate":
        runner.simulate()
    elif args.command == "calibrate":
        noise = runner.calibrate()
        for x, variance in zip(runner.layout.observation_sensors, noise.variances):
            print(f"sensor {x:g}: variance {variance:.6g}")
    elif args.command == "infer":
        outcome = runner.infer()
        print(outcome.summary.frame(outcome.model.space.labels).head(10).to_string(index=False))
        if outcome.report is not None:
            print(f"NRMSE {outcome.report.nrmse:.4g} ({outcome.report.nrmse_percent:.2f}%)")
    elif args.command == "sweep":
        table = runner.sweep(args.vary, args.values)
        print(table.to_string(index=False))
    elif args.command == "landscape":
        runner.landscape()
    print(f"results written to {runner.out_dir}")


def exit_code(error: Exception) -> int:
    if isinstance(error, InferenceError):
        return EXIT_INFERENCE
    if isinstance(error, (NumericalError, FitError, CalibrationError)):
        return EXIT_NUMERICAL
    return EXIT_INPUT


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        settings = Config()
    except InputError as e:
        logging.basicConfig(level=logging.INFO)
        logger.error(str(e))
        return EXIT_INPUT

    logging.basicConfig(
        level=getattr(args, "log_level", None) or settings.runtime.log_level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        run(args, settings)
    except (BathyferError, ValidationError) as e:
        code = exit_code(e)
        logger.error(f"{args.command} failed: {e}")
        if isinstance(e, InferenceError) and e.diagnostics:
            logger.error(f"diagnostics: {json.dumps(e.diagnostics, default=str)}")
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
