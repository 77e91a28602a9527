import logging
import math

from collections import namedtuple
from concurrent.futures import ProcessPoolExecutor
from functools import partial

import numpy as np

from .config import ExperimentMode, worker_count
from .dgp import generate_dataset, honest_split
from .diagnostics import schedule_admissibility, trace_assumptions
from .estimators import LeafTable, combine_tree_values
from .splitters import grow_tree, snap_ceil
from .streams import Experiment, Role, stream_seed
from .weights import analytic_moments, draw_weights


LOG = logging.getLogger()

ResultRow = namedtuple('ResultRow', ['mode', 'n', 'query_id', 'x', 'metric', 'value', 'std_err',
                                     'empty_rate', 'replication_count'])

FittedTree = namedtuple('FittedTree', ['tree', 'i_sample', 'i_weights', 'mean_w'])

GRID_QUERY_ID = 'grid'
TREND_THRESHOLD = 0.8
EMPTY_RATE_WARNING = 0.01
NESTED_PATH_NOTE = ('nested-path results follow one growing sample per path; they are a '
                    'finite-n proxy for almost-sure convergence, not a test of it')

# metrics expected to grow with n; every other trend is expected to shrink
_INCREASING_PREFIXES = ('leaf_mass', 'depth_mean')


def query_id(index):
    return f'q{index}'


def effective_size(n_i, mean_w):
    """Prediction-set size the schedules see, n_I E[W_1] rounded up."""
    return max(2, int(snap_ceil(n_i * mean_w)))


def evaluation_grid(resolution, d):
    axis = (2.0 * np.arange(resolution) + 1.0) / (2.0 * resolution)
    mesh = np.meshgrid(*[axis] * d, indexing='ij')
    return np.stack([coordinate.ravel() for coordinate in mesh], axis=1)


def fit_tree(config, data, partition, seed_of_role):
    """Grow one honest tree; seed_of_role maps a Role to the seed of its stream."""
    i_sample = data.subset(partition.i_indices)
    j_sample = data.subset(partition.j_indices)

    i_weights = None
    mean_w = 1.0
    if config.i_scheme is not None:
        i_weights = draw_weights(config.i_scheme, partition.n_i, seed_of_role(Role.I_WEIGHTS))
        mean_w = analytic_moments(config.i_scheme, partition.n_i).mean_w1
    j_weights = None
    if config.j_scheme is not None:
        j_weights = draw_weights(config.j_scheme, partition.n_j, seed_of_role(Role.J_WEIGHTS))

    tree = grow_tree(config.splitter, config.d, effective_size(partition.n_i, mean_w),
                     seed_of_role(Role.THETA), j_features=j_sample.features,
                     j_weights=j_weights, i_mass=partition.n_i * mean_w)
    return FittedTree(tree, i_sample, i_weights, mean_w)


def _tree_seeds(config, experiment, n_index, replication, tree_index=0):
    def seed_of_role(role):
        return stream_seed(config.master_seed, experiment, n_index, replication, tree_index, role)
    return seed_of_role


def _draw_data(config, experiment, n_index, replication):
    n = config.n_grid[n_index]
    seeds = _tree_seeds(config, experiment, n_index, replication)
    data = generate_dataset(config.truth, n, config.d, seeds(Role.DATA))
    return data, honest_split(data, config.honest_ratio, seeds(Role.SPLIT))


def single_tree_replication(config, n_index, replication, grid=None):
    """One replication of the single-tree experiments; returns per-query and grid arrays."""
    data, partition = _draw_data(config, Experiment.SINGLE_TREE, n_index, replication)
    fitted = fit_tree(config, data, partition,
                      _tree_seeds(config, Experiment.SINGLE_TREE, n_index, replication))
    tree = fitted.tree
    table = LeafTable(tree, fitted.i_sample, fitted.i_weights, fitted.mean_w)

    queries = np.asarray(config.query_points)
    values, density, numerator = table.predict(queries)
    traces = [trace_assumptions(tree, fitted.i_sample, x, fitted.i_weights, fitted.mean_w,
                                leaf_table=table) for x in queries]
    truth = config.truth
    result = {
        'error': values - truth.conditional_mean(queries),
        'density_error': density - truth.density.pdf(queries),
        'numerator_error': numerator - truth.numerator(queries),
        'side_lengths': np.array([trace.side_lengths for trace in traces]),
        'leaf_mass': np.array([trace.leaf_mass for trace in traces]),
        'balance': np.array([trace.balance_fractions for trace in traces]),
        'depth': np.array([trace.depth for trace in traces], dtype=float),
        'min_volume': traces[0].min_volume,
        'sup_side': traces[0].sup_side_lengths,
    }

    if grid is not None:
        _, grid_density, grid_numerator = table.predict(grid)
        grid_leaves = tree.leaf_nodes(grid)
        result.update(
            sup_density_error=float(np.max(np.abs(grid_density - truth.density.pdf(grid)))),
            sup_numerator_error=float(np.max(np.abs(grid_numerator - truth.numerator(grid)))),
            grid_side=(tree.upper[grid_leaves] - tree.lower[grid_leaves]).max(axis=0),
        )
    return result


def nested_path_replication(config, replication):
    """Errors at every n along one nested sample path with a fixed split randomness."""
    n_i_max, n_j_max = config.split_sizes(config.n_grid[-1])
    pool_i = generate_dataset(config.truth, n_i_max, config.d, stream_seed(
        config.master_seed, Experiment.NESTED_PATH, 0, replication, 0, Role.DATA))
    pool_j = generate_dataset(config.truth, n_j_max, config.d, stream_seed(
        config.master_seed, Experiment.NESTED_PATH, 0, replication, 1, Role.DATA))
    theta = stream_seed(config.master_seed, Experiment.NESTED_PATH, 0, replication, 0, Role.THETA)

    queries = np.asarray(config.query_points)
    truth_values = config.truth.conditional_mean(queries)
    errors = []
    for n_index, n in enumerate(config.n_grid):
        n_i, n_j = config.split_sizes(n)
        i_sample = pool_i.prefix(n_i)
        j_sample = pool_j.prefix(n_j)
        seeds = _tree_seeds(config, Experiment.NESTED_PATH, n_index, replication)

        i_weights = None
        mean_w = 1.0
        if config.i_scheme is not None:
            i_weights = draw_weights(config.i_scheme, n_i, seeds(Role.I_WEIGHTS))
            mean_w = analytic_moments(config.i_scheme, n_i).mean_w1
        j_weights = None
        if config.j_scheme is not None:
            j_weights = draw_weights(config.j_scheme, n_j, seeds(Role.J_WEIGHTS))

        tree = grow_tree(config.splitter, config.d, effective_size(n_i, mean_w), theta,
                         j_features=j_sample.features, j_weights=j_weights, i_mass=n_i * mean_w)
        values, _, _ = LeafTable(tree, i_sample, i_weights, mean_w).predict(queries)
        errors.append(values - truth_values)
    return {'error': np.array(errors)}


def forest_replication(config, n_index, replication):
    data, partition = _draw_data(config, Experiment.FOREST, n_index, replication)
    queries = np.asarray(config.query_points)

    tree_values = []
    for tree_index in range(config.forest_size):
        fitted = fit_tree(config, data, partition, _tree_seeds(
            config, Experiment.FOREST, n_index, replication, tree_index))
        values, _, _ = LeafTable(fitted.tree, fitted.i_sample, fitted.i_weights,
                                 fitted.mean_w).predict(queries)
        tree_values.append(values)
    tree_values = np.array(tree_values)

    forest = [combine_tree_values(tree_values[:, q].tolist()) for q in range(queries.shape[0])]
    forest_values = np.array([np.nan if p.value is None else p.value for p in forest])
    truth_values = config.truth.conditional_mean(queries)
    return {
        'forest_error': forest_values - truth_values,
        'tree_error': tree_values[0] - truth_values,
        'skip_rate': np.array([p.skipped_count / p.n_trees for p in forest]),
    }


def _run_task(config, task):
    kind, n_index, replication = task
    if kind is ExperimentMode.NESTED_PATH:
        return nested_path_replication(config, replication)
    if kind is ExperimentMode.FOREST:
        return forest_replication(config, n_index, replication)
    grid = None
    if kind is ExperimentMode.UNIFORM:
        grid = evaluation_grid(config.sup_grid_resolution, config.d)
    return single_tree_replication(config, n_index, replication, grid)


def _mean_and_error(values):
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return math.nan, math.nan
    if values.size == 1:
        return float(values[0]), 0.0
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.size))


def _quantile_and_error(values, q):
    """Sample quantile with half the spread of the order statistics one binomial sd away."""
    values = np.sort(np.asarray(values, dtype=float))
    size = values.size
    if size == 0:
        return math.nan, math.nan
    estimate = float(np.quantile(values, q))
    if size == 1:
        return estimate, 0.0
    spread = math.sqrt(size * q * (1.0 - q))
    low = min(max(int(math.floor(size * q - spread)), 0), size - 1)
    high = min(max(int(math.ceil(size * q + spread)), 0), size - 1)
    return estimate, float(values[high] - values[low]) / 2.0


def error_metrics(errors, p_norms, prefix='', moments=True):
    """Bias, variance, MSE and L^p summaries of prediction errors, skipping Empty (NaN) entries."""
    errors = np.asarray(errors, dtype=float)
    kept = errors[~np.isnan(errors)]
    metrics = {}
    if moments:
        bias = _mean_and_error(kept)
        centered = (kept - bias[0]) ** 2
        metrics[f'{prefix}bias'] = bias
        # population variance, so mse = bias^2 + variance on the same draws
        metrics[f'{prefix}variance'] = (float(centered.mean()) if kept.size else math.nan,
                                        _mean_and_error(centered)[1])
        metrics[f'{prefix}mse'] = _mean_and_error(kept ** 2)
    for p in p_norms:
        moment, moment_error = _mean_and_error(np.abs(kept) ** p)
        norm = moment ** (1.0 / p) if kept.size else math.nan
        norm_error = moment_error / p * moment ** (1.0 / p - 1.0) if moment > 0.0 else 0.0
        metrics[f'{prefix}l{p:g}_moment'] = (moment, moment_error)
        metrics[f'{prefix}l{p:g}_norm'] = (norm, norm_error)
    return metrics


class ConvergenceReport:
    def __init__(self, mode, rows, trends, note=None):
        self.mode = mode
        self.rows = rows
        self.trends = trends
        self.note = note

    def value(self, n, query, metric):
        for row in self.rows:
            if row.n == n and row.query_id == query and row.metric == metric:
                return row.value
        raise KeyError(f'no {metric} row for n={n}, query {query}')

    def series(self, query, metric):
        return [row.value for row in self.rows if row.query_id == query and row.metric == metric]

    def row(self, n, query, metric):
        for row in self.rows:
            if row.n == n and row.query_id == query and row.metric == metric:
                return row
        raise KeyError(f'no {metric} row for n={n}, query {query}')


def trend_verdicts(rows):
    """Fraction of adjacent n pairs moving in the expected direction, per metric and query."""
    series = {}
    for row in rows:
        series.setdefault(f'{row.metric}|{row.query_id}', []).append((row.n, row.value))

    trends = {}
    for key, points in series.items():
        values = [value for _, value in sorted(points)]
        pairs = [(a, b) for a, b in zip(values, values[1:])
                 if not (math.isnan(a) or math.isnan(b))]
        if not pairs:
            continue
        increasing = key.startswith(_INCREASING_PREFIXES)
        moves = [b > a if increasing else b < a for a, b in pairs]
        trends[key] = sum(moves) / len(moves)
    return trends


class Simulation:
    """
    Drives one experiment: fans replications out to worker processes and
    reduces their results by task index, so the report does not depend on the
    number of workers.
    """
    def __init__(self, config, threads=None):
        self.config = config
        self.threads = threads or worker_count()
        self.mode = config.mode

    def _map(self, tasks):
        run = partial(_run_task, self.config)
        if self.threads == 1 or len(tasks) == 1:
            return [run(task) for task in tasks]
        with ProcessPoolExecutor(max_workers=self.threads) as executor:
            return list(executor.map(run, tasks, chunksize=max(1, len(tasks) // (4 * self.threads))))

    def _warn_admissibility(self):
        for violation in schedule_admissibility(self.config.splitter, self.config.i_scheme):
            LOG.warning(f'schedule outside the known consistency conditions: {violation}')

    def _row(self, n, query, metric, estimate, empty_rate):
        x = None if query is None else tuple(self.config.query_points[query])
        query_name = GRID_QUERY_ID if query is None else query_id(query)
        value, std_err = estimate
        return ResultRow(self.mode.value, n, query_name, x, metric, value, std_err,
                         empty_rate, self.config.replications)

    def _empty_rate(self, n, query, errors):
        rate = float(np.mean(np.isnan(errors)))
        if rate > EMPTY_RATE_WARNING:
            LOG.warning(f'n={n} {query_id(query)}: {rate:.1%} of predictions are Empty')
        return rate

    def run(self, mode=None):
        mode = self.mode = mode or self.config.mode
        self._warn_admissibility()
        if mode is ExperimentMode.NESTED_PATH:
            rows = self._run_nested_path()
        else:
            rows = []
            for n_index, n in enumerate(self.config.n_grid):
                LOG.info(f'{mode.value}: n={n} ({n_index + 1}/{len(self.config.n_grid)}), '
                         f'{self.config.replications} replications on {self.threads} workers')
                tasks = [(mode, n_index, r) for r in range(self.config.replications)]
                results = self._map(tasks)
                if mode is ExperimentMode.FOREST:
                    rows.extend(self._forest_rows(n, results))
                else:
                    rows.extend(self._single_tree_rows(mode, n, results))

        note = NESTED_PATH_NOTE if mode is ExperimentMode.NESTED_PATH else None
        return ConvergenceReport(mode, rows, trend_verdicts(rows), note)

    def _single_tree_rows(self, mode, n, results):
        config = self.config
        rows = []
        stacked = {key: np.array([result[key] for result in results]) for key in results[0]}

        if mode is not ExperimentMode.UNIFORM:
            for q in range(len(config.query_points)):
                errors = stacked['error'][:, q]
                empty = self._empty_rate(n, q, errors)
                metrics = error_metrics(errors, config.p_norms,
                                        moments=mode is ExperimentMode.POINTWISE)
                if mode is ExperimentMode.POINTWISE:
                    metrics['density_mse'] = _mean_and_error(stacked['density_error'][:, q] ** 2)
                    metrics['numerator_mse'] = _mean_and_error(stacked['numerator_error'][:, q] ** 2)
                    metrics.update(self._trace_metrics(stacked, q))
                rows.extend(self._row(n, q, metric, estimate, empty)
                            for metric, estimate in metrics.items())

        if mode is ExperimentMode.LP:
            return rows

        grid = {'min_volume': _mean_and_error(stacked['min_volume'])}
        for j in range(config.d):
            grid[f'sup_side_length_{j + 1}'] = _mean_and_error(stacked['sup_side'][:, j])
        if mode is ExperimentMode.UNIFORM:
            grid['sup_density_error'] = _mean_and_error(stacked['sup_density_error'])
            grid['sup_numerator_error'] = _mean_and_error(stacked['sup_numerator_error'])
            for j in range(config.d):
                grid[f'grid_side_length_{j + 1}'] = _mean_and_error(stacked['grid_side'][:, j])
        rows.extend(self._row(n, None, metric, estimate, 0.0) for metric, estimate in grid.items())
        return rows

    def _trace_metrics(self, stacked, q):
        metrics = {}
        columns = {'leaf_mass': stacked['leaf_mass'][:, q]}
        for j in range(self.config.d):
            columns[f'side_length_{j + 1}'] = stacked['side_lengths'][:, q, j]
            columns[f'balance_fraction_{j + 1}'] = stacked['balance'][:, q, j]
        for name, values in columns.items():
            metrics[f'{name}_median'] = _quantile_and_error(values, 0.5)
            metrics[f'{name}_q90'] = _quantile_and_error(values, 0.9)
        metrics['depth_mean'] = _mean_and_error(stacked['depth'][:, q])
        return metrics

    def _forest_rows(self, n, results):
        rows = []
        for q in range(len(self.config.query_points)):
            forest_errors = np.array([result['forest_error'][q] for result in results])
            tree_errors = np.array([result['tree_error'][q] for result in results])
            empty = self._empty_rate(n, q, forest_errors)
            metrics = error_metrics(forest_errors, (), prefix='forest_')
            metrics.update(error_metrics(tree_errors, (), prefix='tree_'))
            metrics['empty_skip_rate'] = _mean_and_error([result['skip_rate'][q] for result in results])
            rows.extend(self._row(n, q, metric, estimate, empty) for metric, estimate in metrics.items())
        return rows

    def _run_nested_path(self):
        config = self.config
        if not config.nested_path:
            raise ValueError('nested-path experiments need nested_path: true in the config')

        LOG.info(f'nested_path: {config.replications} paths over n={config.n_grid} '
                 f'on {self.threads} workers')
        results = self._map([(ExperimentMode.NESTED_PATH, 0, r) for r in range(config.replications)])
        # paths x n x queries
        errors = np.abs(np.array([result['error'] for result in results]))

        rows = []
        for n_index, n in enumerate(config.n_grid):
            for q in range(len(config.query_points)):
                path_errors = errors[:, n_index, q]
                empty = self._empty_rate(n, q, path_errors)
                kept = path_errors[~np.isnan(path_errors)]
                rows.append(self._row(n, q, 'path_abs_error', _mean_and_error(kept), empty))

        n_last = config.n_grid[-1]
        for q in range(len(config.query_points)):
            first, last = errors[:, 0, q], errors[:, -1, q]
            comparable = ~(np.isnan(first) | np.isnan(last))
            improved = (last[comparable] < first[comparable]).astype(float)
            rows.append(self._row(n_last, q, 'path_improved_fraction', _mean_and_error(improved),
                                  float(np.mean(~comparable))))
        return rows


def run_experiment(config, threads=None):
    return Simulation(config, threads).run()


def run_pointwise(config, threads=None):
    return Simulation(config, threads).run(ExperimentMode.POINTWISE)


def run_uniform(config, threads=None):
    return Simulation(config, threads).run(ExperimentMode.UNIFORM)


def run_lp(config, threads=None):
    return Simulation(config, threads).run(ExperimentMode.LP)


def run_nested_path(config, threads=None):
    return Simulation(config, threads).run(ExperimentMode.NESTED_PATH)


def run_forest(config, threads=None):
    if config.i_scheme is None and config.j_scheme is None:
        raise ValueError('forest experiments need bootstrap weights')
    return Simulation(config, threads).run(ExperimentMode.FOREST)
