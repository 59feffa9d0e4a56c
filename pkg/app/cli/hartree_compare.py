import argparse

from app.cli.common import add_common_arguments, execute
from app.services.experiment_service import run_hartree_compare


def register(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("hartree-compare", help="Factorization gaps between many-body and Hartree dynamics.")
    add_common_arguments(parser)
    parser.set_defaults(handler=lambda args: execute(args, run_hartree_compare))
    return parser
