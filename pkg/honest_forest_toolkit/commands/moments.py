import json
import logging

from . import EXIT_OK, EXIT_USAGE
from ..weights import WeightKind, WeightScheme, WildLaw, analytic_moments, empirical_moments


LOG = logging.getLogger()

SCHEMES = {
    'multinomial': (WeightKind.MULTINOMIAL, None),
    'without-replacement': (WeightKind.WITHOUT_REPLACEMENT, None),
    'wild-poisson': (WeightKind.WILD, WildLaw.POISSON),
    'wild-lognormal': (WeightKind.WILD, WildLaw.LOGNORMAL),
    'wild-gamma': (WeightKind.WILD, WildLaw.GAMMA),
}


def add_parser(subparsers):
    parser = subparsers.add_parser('moments', help='Print exact (and Monte Carlo) bootstrap weight moments.')
    parser.add_argument('--scheme', required=True, choices=list(SCHEMES), help=(
        'The bootstrap weight scheme.'))

    parser.add_argument('--m', type=int, default=None, help=(
        'Number of trials m_n, required for multinomial and without-replacement.'))

    parser.add_argument('--n', type=int, default=100, help=(
        'Sample size the weights are drawn for, default: 100.'))

    parser.add_argument('--reps', type=int, default=None, help=(
        'Monte Carlo replications for the empirical report. Omit for the exact report only.'))

    parser.add_argument('--seed', type=int, default=0, help='Seed of the Monte Carlo draws, default: 0.')

    parser.add_argument('--sigma', type=float, default=0.5, help=(
        'Log-scale of wild-lognormal weights, default: 0.5.'))

    parser.add_argument('--shape', type=float, default=2.0, help=(
        'Shape of wild-gamma weights, default: 2.0.'))


def make_scheme(args):
    kind, law = SCHEMES[args.scheme]
    if kind is WeightKind.WILD:
        return WeightScheme.wild(law, sigma=args.sigma, shape=args.shape)
    if args.m is None:
        raise ValueError(f'--scheme {args.scheme} needs --m')
    if kind is WeightKind.MULTINOMIAL:
        return WeightScheme.multinomial(args.m)
    return WeightScheme.without_replacement(args.m)


def run(args):
    try:
        scheme = make_scheme(args)
        output = {'analytic': analytic_moments(scheme, args.n)._asdict()}
        if args.reps is not None:
            report, std_err = empirical_moments(scheme, args.n, args.reps, args.seed)
            output['empirical'] = report._asdict()
            output['empirical_std_err'] = std_err._asdict()
    except ValueError as exc:
        LOG.error(f'moments: {exc}')
        return EXIT_USAGE

    print(json.dumps(output, indent=2))
    return EXIT_OK
