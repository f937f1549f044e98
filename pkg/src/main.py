"""Command-line entry point: `python -m src.main run|validate|version`."""

import argparse
import logging
import sys
from dataclasses import replace
from importlib.metadata import PackageNotFoundError, version
from logging import getLogger
from pathlib import Path
from typing import Optional, Tuple

from opentelemetry.sdk._logs import LoggerProvider
from opentelemetry.sdk.metrics import MeterProvider

from .config import Config
from .errors import AllTrialsRejected, ConfigError, SketchingError
from .experiments.config import ExperimentConfig
from .experiments.report import summary_table, write_results
from .experiments.runner import ExperimentRunner
from .telemetry import Metrics, create_metrics, setup_telemetry

logger = getLogger(__name__)

PACKAGE_NAME = "debiased-sketching"

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_ALL_REJECTED = 3


def setup_otel(config: Config) -> Tuple[Optional[MeterProvider], Optional[LoggerProvider], Optional[Metrics]]:
    logger.debug("Initializing OpenTelemetry")
    meter_provider, logger_provider = setup_telemetry(config)
    return meter_provider, logger_provider, create_metrics(meter_provider)


def package_version() -> str:
    try:
        return version(PACKAGE_NAME)
    except PackageNotFoundError:
        return (Path(__file__).resolve().parent.parent / "VERSION").read_text(encoding="utf-8").strip()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="python -m src.main",
                                     description="Monte-Carlo experiments for debiased sketched regression and CUR")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="run an experiment config and write its result file")
    run.add_argument("config", help="path to the experiment TOML file")
    run.add_argument("--threads", type=int, default=None, help="worker threads (default: SKETCH_THREADS)")
    run.add_argument("--seed", type=int, default=None, help="override the config's base seed")

    validate = commands.add_parser("validate", help="check an experiment config and print resolved settings")
    validate.add_argument("config", help="path to the experiment TOML file")

    commands.add_parser("version", help="print the package version")
    return parser


def _report_config_error(e: ConfigError):
    logger.error(f"Invalid experiment config: {e}")
    for violation in e.violations:
        logger.error(f"  - {violation}")


def run_experiment(config: Config, path: str, threads: Optional[int], seed: Optional[int],
                   metrics: Optional[Metrics]) -> int:
    cfg = ExperimentConfig.from_file(path)
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    threads = threads or config.threads
    logger.info(f"Running {cfg.experiment} experiment from {path}: {len(cfg.cells)} sweep point(s), "
                f"{cfg.trials} trials, seed {cfg.seed}, {threads} thread(s)")

    runner = ExperimentRunner(cfg, threads=threads, bootstrap=config.bootstrap_resamples, metrics=metrics)
    rows = runner.run()
    output = write_results(cfg, rows, runner.provenance())
    for page in summary_table(rows):
        print(page)
    logger.info(f"Run completed successfully; results in {output}")
    return EXIT_OK


def validate_experiment(path: str) -> int:
    cfg = ExperimentConfig.from_file(path)
    runner = ExperimentRunner(cfg)
    for line in runner.diagnostics():
        print(line)
    violations = runner.feasibility_violations()
    if violations:
        raise ConfigError(f"{path}: {len(violations)} debiased cell(s) cannot be debiased", violations)
    print(f"{path}: ok")
    return EXIT_OK


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    # stdout carries results only; logs go to stderr
    logging.basicConfig(
        level=logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.StreamHandler(sys.stderr)
        ]
    )

    if args.command == "version":
        print(package_version())
        return EXIT_OK

    try:
        config = Config.from_env()
    except ValueError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_INVALID
    logging.getLogger().setLevel(config.log_level)
    if getattr(args, "threads", None) is not None and args.threads < 1:
        logger.error(f"--threads must be >= 1, got {args.threads}")
        return EXIT_INVALID

    meter_provider = None
    logger_provider = None
    try:
        if args.command == "validate":
            return validate_experiment(args.config)
        meter_provider, logger_provider, metrics = setup_otel(config)
        return run_experiment(config, args.config, args.threads, args.seed, metrics)
    except ConfigError as e:
        _report_config_error(e)
        return EXIT_INVALID
    except AllTrialsRejected as e:
        logger.error(f"{e}")
        return EXIT_ALL_REJECTED
    except SketchingError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_INVALID
    except Exception:
        logger.exception(f"Unexpected error running {args.command}")
        raise
    finally:
        if meter_provider:
            logger.debug("Flushing metrics...")
            meter_provider.force_flush(timeout_millis=30000)
            meter_provider.shutdown()
        if logger_provider:
            logger.debug("Flushing logs...")
            logger_provider.force_flush(timeout_millis=30000)
            logger_provider.shutdown()


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
