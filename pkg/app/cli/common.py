import argparse
import logging
from typing import Callable

from app.config import settings
from app.domain.exceptions import BoundViolation, NumericalError
from app.repositories.config_repository import ConfigRepository, artifact_header
from app.repositories.result_repository import ResultRepository
from app.services.experiment_service import SweepOutcome


logger = logging.getLogger(__name__)

Runner = Callable[..., SweepOutcome]


def add_common_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="INI experiment configuration")
    parser.add_argument("--out", default=None, help="CSV destination (default: [output] path, else stdout)")
    parser.add_argument("--seed", type=int, default=None, help="override [run] seed")
    parser.add_argument("--threads", type=int, default=settings.DEFAULT_THREADS,
                        help="worker threads for independent sweep cells")


def execute(args: argparse.Namespace, runner: Runner) -> int:
    """Load, run, write the CSV, then raise on violations or numerical failures."""
    config = ConfigRepository(args.config).load().with_seed(args.seed)
    outcome = runner(config, threads=max(1, args.threads))

    repository = ResultRepository(args.out or config.output.path, precision=config.output.precision)
    repository.write(outcome.rows, outcome.columns, artifact_header(config, outcome.command),
                     outcome.summary)

    if outcome.numerical_failure:
        raise NumericalError(f"{outcome.command}: {outcome.numerical_failure}")
    if outcome.violation:
        raise BoundViolation(f"{outcome.command}: {outcome.violation}")
    logger.info(f"{outcome.command} passed ({len(outcome.rows)} rows)")
    return 0
