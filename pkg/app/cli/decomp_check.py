import argparse

from app.cli.common import add_common_arguments, execute
from app.services.experiment_service import run_decomposition_check


def register(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("decomp-check", help="Projector decomposition identity P + Q + R = correlation.")
    add_common_arguments(parser)
    parser.set_defaults(handler=lambda args: execute(args, run_decomposition_check))
    return parser
