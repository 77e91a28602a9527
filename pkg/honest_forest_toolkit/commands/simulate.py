import logging

from . import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE
from ..config import ConfigError, load_config, worker_count
from ..experiments import Simulation
from ..reporting import Reporting


LOG = logging.getLogger()


def add_parser(subparsers):
    parser = subparsers.add_parser('simulate', help='Run a Monte Carlo consistency experiment.')
    parser.add_argument('config', help=(
        'Experiment config, YAML or JSON. See configs/ for examples.'))

    parser.add_argument('--out-dir', default='results', help=(
        'Directory for results.csv, summary.json, manifest.json and config.json, default: results'))


def run(args):
    try:
        config = load_config(args.config)
        threads = worker_count()
    except ConfigError as exc:
        LOG.error(str(exc))
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        LOG.error(f'{args.config}: {exc}')
        return EXIT_USAGE

    try:
        report = Simulation(config, threads).run()
        reporting = Reporting(config, args.out_dir)
        reporting.write(report)
        reporting.print_summary(report)
    except Exception:
        LOG.exception(f'simulation of {args.config} failed')
        return EXIT_RUNTIME

    return EXIT_OK
