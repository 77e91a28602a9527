import json
import logging

from . import EXIT_OK, EXIT_USAGE
from ..diagnostics import centered_min_split_recursion


LOG = logging.getLogger()


def add_parser(subparsers):
    parser = subparsers.add_parser('recursion', help=(
        'Iterate the minimum-split recursion of centered trees.'))
    parser.add_argument('--p', type=float, required=True, help=(
        'Probability of splitting on the tracked feature, in (0, 1).'))

    parser.add_argument('--depth', type=int, default=200, help='Tree depth, default: 200.')


def run(args):
    try:
        report = centered_min_split_recursion(args.p, args.depth)
    except ValueError as exc:
        LOG.error(f'recursion: {exc}')
        return EXIT_USAGE

    print(json.dumps({'p': args.p, 'depth': args.depth, **report._asdict()}, indent=2))
    return EXIT_OK
