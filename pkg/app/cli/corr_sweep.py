import argparse

from app.cli.common import add_common_arguments, execute
from app.services.experiment_service import run_corr_sweep


def register(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("corr-sweep", help="Correlations of seeded witnesses against the correlation bound.")
    add_common_arguments(parser)
    parser.set_defaults(handler=lambda args: execute(args, run_corr_sweep))
    return parser
