import logging
import sys

import pandas

from . import EXIT_OK, EXIT_USAGE
from ..diagnostics import PROBE_DELTAS, PROBE_HORIZON, ProbeMode, summability_probe
from ..splitters import Schedule


LOG = logging.getLogger()


def add_parser(subparsers):
    parser = subparsers.add_parser('probe', help=(
        'Probe the summability conditions of a node-size schedule.'))
    parser.add_argument('--schedule', required=True, help=(
        'Schedule as <name>:<value>, e.g. poly:0.6, sqrtlog:2.0, subsample:0.6, const:3.'))

    parser.add_argument('--d', type=int, default=1, help='Covariate dimension, default: 1.')

    parser.add_argument('--n-max', type=float, default=1e6, help=(
        'Largest n with exact terms, default: 1e6.'))

    parser.add_argument('--mode', choices=[mode.value for mode in ProbeMode], default='weak', help=(
        'weak: terms n^{4d} exp(-k^2/2n); strong and bootstrap: their partial sums; '
        'delta: partial sums of exp(-delta k). Default: weak.'))

    parser.add_argument('--mean-weight', type=float, default=1.0, help=(
        'E[W_1] of the prediction-set weights in bootstrap mode, default: 1.0.'))

    parser.add_argument('--delta', type=float, default=None, help=(
        'delta for delta mode. Omit to probe 0.001, 0.01, 0.1 and 1.'))

    parser.add_argument('--points', type=int, default=50, help=(
        'Number of log-spaced n values printed, default: 50.'))


def run(args):
    mode = ProbeMode(args.mode)
    deltas = [args.delta]
    if mode is ProbeMode.DELTA_SERIES and args.delta is None:
        deltas = list(PROBE_DELTAS)

    try:
        schedule = Schedule.parse(args.schedule)
        results = [summability_probe(schedule, args.d, int(args.n_max), mode,
                                     mean_weight=args.mean_weight, delta=delta, points=args.points)
                   for delta in deltas]
    except ValueError as exc:
        LOG.error(f'probe: {exc}')
        return EXIT_USAGE

    frames = []
    for delta, result in zip(deltas, results):
        frame = pandas.DataFrame({
            'n': result.n,
            'log_term': result.log_terms,
            'log_partial_sum': result.log_partial_sums,
        })
        if mode is ProbeMode.DELTA_SERIES:
            frame.insert(0, 'delta', delta)
        frames.append(frame)
    pandas.concat(frames).to_csv(sys.stdout, index=False, float_format='%.17g')

    for delta, result in zip(deltas, results):
        label = 'verdict' if delta is None else f'verdict[delta={delta:g}]'
        print(f'{label}: {result.verdict} (numerical evidence up to n={int(args.n_max)} '
              f'and a log-space horizon to n={PROBE_HORIZON:g}, not proof; '
              f'final log term {result.final_log_term:.6g}, '
              f'horizon log term {result.horizon_final_log_term:.6g})')
    return EXIT_OK
