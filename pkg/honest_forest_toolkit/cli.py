import argparse
import logging
import logging.config
import os

from pathlib import Path

from . import __version__
from .commands import moments, probe, recursion, simulate


LOG = logging.getLogger()

honest_forest_root_dir = Path(os.path.abspath(__file__)).parents[1]

COMMANDS = {
    'simulate': simulate,
    'moments': moments,
    'recursion': recursion,
    'probe': probe,
}


def setup_logging(level=None):
    logging_ini = honest_forest_root_dir / 'logging.ini'
    if logging_ini.exists():
        logging.config.fileConfig(logging_ini, disable_existing_loggers=False)
    if level:
        logging.getLogger().setLevel(level)


def build_parser():
    parser = argparse.ArgumentParser(
        prog='honest_forest',
        description='Consistency experiments and diagnostics for honest random-split trees and forests.')
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    parser.add_argument(
        '--log-level', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'], default=None, help=(
        'Overrides the level configured in logging.ini.'))

    subparsers = parser.add_subparsers(dest='command', metavar='command')
    subparsers.required = True
    for command in COMMANDS.values():
        command.add_parser(subparsers)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level)
    return COMMANDS[args.command].run(args)
