import json
import logging
import math
import os

import pandas

from tabulate import tabulate

from . import __version__
from .config import ExperimentMode


LOG = logging.getLogger()

HEADLINE_METRICS = {
    ExperimentMode.POINTWISE: ('mse', 'bias', 'variance'),
    ExperimentMode.UNIFORM: ('sup_density_error', 'sup_numerator_error', 'min_volume'),
    ExperimentMode.NESTED_PATH: ('path_abs_error', 'path_improved_fraction'),
    ExperimentMode.FOREST: ('forest_mse', 'tree_mse', 'empty_skip_rate'),
}


def result_columns(d):
    return (['mode', 'n', 'query_id'] + [f'x_{j + 1}' for j in range(d)]
            + ['metric', 'value', 'std_err', 'empty_rate', 'replication_count'])


def _json_number(value):
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return None
    return float(value)


def _coordinate(value):
    return '' if value is None else f'{value:.17g}'


class Reporting:
    def __init__(self, config, out_dir):
        self.config = config
        self.out_dir = out_dir
        self.results_csv = os.path.join(out_dir, 'results.csv')
        self.summary_json = os.path.join(out_dir, 'summary.json')
        self.manifest_json = os.path.join(out_dir, 'manifest.json')
        self.config_json = os.path.join(out_dir, 'config.json')

    @property
    def output_paths(self):
        return [self.results_csv, self.summary_json, self.manifest_json, self.config_json]

    def dataframe(self, report):
        d = self.config.d
        records = []
        for row in report.rows:
            x = row.x if row.x is not None else (None,) * d
            records.append([row.mode, row.n, row.query_id] + [_coordinate(v) for v in x]
                           + [row.metric, row.value, row.std_err, row.empty_rate,
                              row.replication_count])
        return pandas.DataFrame(records, columns=result_columns(d))

    def summary(self, report, config_hash):
        rows = {}
        for row in report.rows:
            key = f'{row.mode}|{row.n}|{row.query_id}'
            rows.setdefault(key, {})[row.metric] = {
                'value': _json_number(row.value),
                'std_err': _json_number(row.std_err),
                'empty_rate': _json_number(row.empty_rate),
                'replication_count': row.replication_count,
            }
        summary = {
            'mode': report.mode.value,
            'config_hash': config_hash,
            'rows': rows,
            'trends': {key: _json_number(value) for key, value in report.trends.items()},
        }
        if report.note:
            summary['proxy'] = report.note
        return summary

    def manifest(self, config_hash):
        return {
            'config_hash': config_hash,
            'tool_version': __version__,
            'master_seed': self.config.master_seed,
            'output_paths': self.output_paths,
        }

    def write(self, report):
        os.makedirs(self.out_dir, exist_ok=True)
        canonical = self.config.canonical_json()
        config_hash = self.config.config_hash()

        self.dataframe(report).to_csv(self.results_csv, index=False, float_format='%.17g',
                                      na_rep='nan')
        with open(self.summary_json, 'w') as summary_file:
            json.dump(self.summary(report, config_hash), summary_file, sort_keys=True, indent=2)
        with open(self.config_json, 'w') as config_file:
            config_file.write(canonical)
        with open(self.manifest_json, 'w') as manifest_file:
            json.dump(self.manifest(config_hash), manifest_file, sort_keys=True, indent=2)

        LOG.info(f'wrote {len(report.rows)} result rows to {self.out_dir}')
        return self.manifest(config_hash)

    def print_summary(self, report):
        if report.mode is ExperimentMode.LP:
            headline = tuple(f'l{p:g}_norm' for p in self.config.p_norms)
        else:
            headline = HEADLINE_METRICS[report.mode]

        table = [[row.n, row.query_id, row.metric, row.value, row.std_err, row.empty_rate]
                 for row in report.rows if row.metric in headline]
        if not table:
            LOG.warning('no headline metrics to summarize')
            return
        print(tabulate(table, headers=['n', 'query', 'metric', 'value', 'std_err', 'empty_rate'],
                       tablefmt='github', floatfmt='.6g'))

        trends = {key: value for key, value in report.trends.items()
                  if key.split('|')[0] in headline}
        if trends:
            print()
            print(tabulate(sorted(trends.items()), headers=['trend', 'fraction'], tablefmt='github'))
        if report.note:
            print(f'\nnote: {report.note}')
