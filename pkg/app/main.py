"""
Command-line entry point: `python -m app.main <command> --config PATH [--out PATH]`.

Exit codes: 0 pass, 1 bound/identity violation, 2 configuration error,
3 numerical failure.
"""

import argparse
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from app.config import settings
from app.domain.exceptions import (
    BoundViolation,
    ConfigurationError,
    MixtureLabError,
    NumericalError,
)

# Import subcommands
from app.cli import corr_sweep, decomp_check, hartree_compare, lr_sweep


EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


# ============================================================================
# Logging Configuration
# ============================================================================

def setup_logging(level: Optional[str] = None):
    """Configure application logging."""
    level = level or ("DEBUG" if settings.DEBUG else settings.LOG_LEVEL)
    log_level = getattr(logging, level.upper(), logging.INFO)

    logging.basicConfig(
        level=log_level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S',
        stream=sys.stderr,
    )

    logging.getLogger('app').setLevel(log_level)

    # Reduce noise from third-party libraries
    logging.getLogger('numexpr').setLevel(logging.WARNING)
    logging.getLogger('matplotlib').setLevel(logging.WARNING)

    logger = logging.getLogger(__name__)
    logger.debug(f"Logging configured at {level} level")


# ============================================================================
# Argument Parser
# ============================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=settings.APP_NAME.lower(),
        description="Two-species Bose mixture laboratory: bound and factorization suites",
    )
    parser.add_argument("--version", action="version", version=f"{settings.APP_NAME} {settings.APP_VERSION}")
    parser.add_argument("--log-level", default=None, help="override LOG_LEVEL")

    subparsers = parser.add_subparsers(dest="command", required=True)
    for module in (lr_sweep, corr_sweep, decomp_check, hartree_compare):
        module.register(subparsers)
    return parser


# ============================================================================
# Exception Handling
# ============================================================================

def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    logger = logging.getLogger(__name__)

    try:
        return args.handler(args)

    except (ConfigurationError, ValidationError) as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG

    except BoundViolation as e:
        logger.error(f"Verification failed: {e}")
        return EXIT_VIOLATION

    except NumericalError as e:
        logger.error(f"Numerical failure: {e}")
        return EXIT_NUMERICAL

    except MixtureLabError as e:
        # dimension and operand errors stem from the configured system
        logger.error(f"Invalid experiment: {e}")
        return EXIT_CONFIG

    except ValueError as e:
        logger.error(f"Invalid experiment: {e}")
        return EXIT_CONFIG

    except Exception as e:
        logger.error(f"Unhandled exception in {args.command}: {e}", exc_info=True)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
