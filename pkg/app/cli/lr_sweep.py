import argparse

from app.cli.common import add_common_arguments, execute
from app.services.experiment_service import run_lr_sweep


def register(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("lr-sweep", help="Commutator norms of seeded witnesses against the commutator bound.")
    add_common_arguments(parser)
    parser.set_defaults(handler=lambda args: execute(args, run_lr_sweep))
    return parser
