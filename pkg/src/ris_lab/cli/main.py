"""
Exit codes:
- 0: the subcommand finished and wrote its artifacts
- 1: usage error or invalid scenario config (message names the offending fields)
- 2: runtime failure (numerical error, missing checkpoint, I/O)
"""

import argparse
import asyncio
import sys
import uuid
from pathlib import Path

import structlog

from ris_lab.config.settings import settings
from ris_lab.core.errors import ConfigError
from ris_lab.core.logging_config import bind_run_context, setup_logging
from ris_lab.core.observability import correlation_id, dump_metrics, setup_tracing
from ris_lab.domain.models.scenario import config_hash, load_scenario
from ris_lab.domain.services.experiment import ExperimentService

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # Report usage errors as exceptions instead of exiting with 2 !!!
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ris-lab", description="RIS-aided mmWave MIMO imitation-environment lab")
    parser.add_argument("--config", type=Path, default=None, help="Scenario JSON (default: packaged defaults)")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="PATH=VALUE", help="Override a config field"
    )
    parser.add_argument("--output-dir", type=Path, default=None, help="Directory for CSVs and checkpoints")
    parser.add_argument("--jobs", type=int, default=None, help="Parallel sweep jobs")
    parser.add_argument("--metrics-file", type=Path, default=None, help="Write Prometheus metrics here on exit")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-dataset", help="Generate the IEN training set")
    sub.add_parser("train-ien", help="Train the IEN and write its MSE trace")
    drl = sub.add_parser("train-drl", help="Train a DDPG agent and write its reward log")
    drl.add_argument("--oracle", choices=["ien", "true", "csi"], default="ien")
    sub.add_parser("baseline-ao", help="Alternating optimization on the true channel")
    sub.add_parser("baseline-random", help="Random-phase reference")
    sub.add_parser("channel-fixture", help="Dump per-path channel terms")
    sweep = sub.add_parser("sweep", help="Run a figure sweep")
    sweep.add_argument("--axis", choices=["ris-elements", "paths", "eta", "coherence"], required=True)
    return parser


async def run_command(service: ExperimentService, args: argparse.Namespace) -> Path:
    if args.command == "gen-dataset":
        return service.gen_dataset()
    if args.command == "train-ien":
        return service.train_ien()
    if args.command == "train-drl":
        return service.train_drl(args.oracle)
    if args.command == "baseline-ao":
        return service.baseline_ao()
    if args.command == "baseline-random":
        return service.baseline_random()
    if args.command == "channel-fixture":
        return service.channel_fixture()
    return await service.sweep(args.axis)


async def main(argv: list[str] | None = None) -> int:  # Parse, run one subcommand and map failures to exit codes !!!
    setup_logging()
    setup_tracing(settings.tracing.enabled, settings.tracing.exporter)
    correlation_id.set(str(uuid.uuid4()))
    logger = structlog.get_logger()

    try:
        args = build_parser().parse_args(argv)
        jobs = args.jobs if args.jobs is not None else settings.runtime.jobs
        if jobs < 1:
            raise UsageError("--jobs must be >= 1")
        config = load_scenario(args.config or settings.runtime.scenario_config, args.overrides)
    except (UsageError, ConfigError) as e:
        # guardrail: usage and config problems are reported without a traceback
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE

    bind_run_context(config_hash(config), config.seed, args.command)
    metrics_file = args.metrics_file or settings.runtime.metrics_file
    service = ExperimentService(config, args.output_dir or settings.runtime.output_dir, jobs)
    try:
        artifact = await run_command(service, args)
        logger.info("Command finished", command=args.command, artifact=str(artifact))
        return EXIT_OK
    except Exception as e:
        # guardrail: any runtime failure becomes exit code 2 after being logged
        logger.error("Command failed", command=args.command, error=str(e), error_type=type(e).__name__)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    finally:
        if metrics_file is not None:
            dump_metrics(metrics_file)


def cmd_run(argv: list[str] | None = None) -> int:
    return asyncio.run(main(argv))


def cli_main():  # Synchronous entry point wrapper for asyncio execution !!!
    sys.exit(cmd_run())


if __name__ == "__main__":
    cli_main()
