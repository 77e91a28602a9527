import math

import numpy as np
import pytest

from honest_forest_toolkit import experiments
from honest_forest_toolkit.config import ExperimentConfig, ExperimentMode
from honest_forest_toolkit.dgp import Dataset
from honest_forest_toolkit.estimators import LeafTable
from honest_forest_toolkit.experiments import ResultRow, Simulation
from honest_forest_toolkit.streams import Experiment


def experiment_config(**overrides):
    data = {
        'mode': 'pointwise',
        'd': 1,
        'truth': {'regression': {'kind': 'linear', 'coeffs': [1.0]},
                  'noise': {'kind': 'gaussian', 'sigma': 0.2}},
        'splitter': {'kind': 'centered', 'schedule': {'kind': 'log2_power_depth', 'beta': 0.5}},
        'n_grid': [32, 128],
        'replications': 6,
        'master_seed': 3,
    }
    data.update(overrides)
    return ExperimentConfig.from_dict(data)


def zero_truth():
    return {'regression': {'kind': 'zero'}}


def metric_rows(report, metric):
    return [row for row in report.rows if row.metric == metric]


def test_effective_size():
    assert experiments.effective_size(100, 0.3) == 30
    assert experiments.effective_size(1, 0.5) == 2
    assert experiments.effective_size(64, 1.0) == 64


def test_evaluation_grid_uses_cell_centers():
    grid = experiments.evaluation_grid(2, 2)

    np.testing.assert_array_equal(grid, [[0.25, 0.25], [0.25, 0.75], [0.75, 0.25], [0.75, 0.75]])
    assert experiments.evaluation_grid(33, 1).shape == (33, 1)


def test_pointwise_rows():
    report = Simulation(experiment_config(), threads=1).run()
    metrics = {row.metric for row in report.rows if row.query_id == 'q0'}

    assert {'bias', 'variance', 'mse', 'l1_norm', 'l2_norm', 'density_mse', 'numerator_mse',
            'leaf_mass_median', 'side_length_1_q90', 'balance_fraction_1_median',
            'depth_mean'} <= metrics
    grid_metrics = {row.metric for row in report.rows if row.query_id == experiments.GRID_QUERY_ID}
    assert grid_metrics == {'min_volume', 'sup_side_length_1'}
    assert all(row.mode == 'pointwise' and row.replication_count == 6 for row in report.rows)
    assert report.row(32, 'q0', 'mse').x == (0.5,)


def test_noiseless_zero_regression_has_no_error():
    report = Simulation(experiment_config(truth=zero_truth()), threads=1).run()

    for metric in ('bias', 'mse', 'variance', 'l2_norm'):
        assert all(row.value == 0.0 for row in metric_rows(report, metric))


def test_mse_decomposes_into_bias_and_variance():
    report = Simulation(experiment_config(), threads=1).run()

    for n in (32, 128):
        bias = report.value(n, 'q0', 'bias')
        variance = report.value(n, 'q0', 'variance')
        assert report.value(n, 'q0', 'mse') == pytest.approx(bias ** 2 + variance, rel=1e-9, abs=1e-15)


def test_depth_follows_the_schedule():
    report = Simulation(experiment_config(), threads=1).run()

    assert report.value(32, 'q0', 'depth_mean') == 2.0
    assert report.value(128, 'q0', 'depth_mean') == 3.0
    assert report.value(128, experiments.GRID_QUERY_ID, 'min_volume') == 0.125
    assert report.trends['depth_mean|q0'] == 1.0


def test_side_length_shrinks_with_depth():
    report = Simulation(experiment_config(), threads=1).run()

    assert report.value(32, 'q0', 'side_length_1_median') == 0.25
    assert report.value(128, 'q0', 'side_length_1_median') == 0.125
    assert report.trends['side_length_1_median|q0'] == 1.0
    assert report.trends['side_length_1_q90|q0'] == 1.0


def test_runs_are_reproducible():
    config = experiment_config()
    first = Simulation(config, threads=1).run()
    second = Simulation(config, threads=1).run()

    np.testing.assert_array_equal([row.value for row in first.rows], [row.value for row in second.rows])


def test_worker_count_does_not_change_results():
    config = experiment_config()
    serial = Simulation(config, threads=1).run()
    parallel = Simulation(config, threads=2).run()

    assert [row.metric for row in serial.rows] == [row.metric for row in parallel.rows]
    np.testing.assert_array_equal([row.value for row in serial.rows], [row.value for row in parallel.rows])
    np.testing.assert_array_equal([row.std_err for row in serial.rows],
                                  [row.std_err for row in parallel.rows])


def test_replications_use_their_own_streams():
    config = experiment_config()
    alone = experiments.single_tree_replication(config, 1, 4)
    experiments.single_tree_replication(config, 1, 3)
    again = experiments.single_tree_replication(config, 1, 4)

    np.testing.assert_array_equal(alone['error'], again['error'])


def test_root_only_tree_estimates_uniform_density_exactly():
    config = experiment_config(
        mode='uniform', truth=zero_truth(), sup_grid_resolution=9,
        splitter={'kind': 'centered', 'schedule': {'kind': 'constant', 'value': 0}})
    report = Simulation(config, threads=1).run()

    assert all(row.query_id == experiments.GRID_QUERY_ID for row in report.rows)
    for metric in ('sup_density_error', 'sup_numerator_error'):
        assert all(row.value == 0.0 for row in metric_rows(report, metric))
    assert all(row.value == 1.0 for row in metric_rows(report, 'grid_side_length_1'))


def test_grid_side_never_exceeds_sup_side():
    config = experiment_config(mode='uniform', d=2, truth=zero_truth(), sup_grid_resolution=5,
                               splitter={'kind': 'uniform',
                                         'schedule': {'kind': 'log_depth', 'eps': 0.5}})
    grid = experiments.evaluation_grid(5, 2)

    for replication in range(4):
        result = experiments.single_tree_replication(config, 1, replication, grid)
        assert np.all(result['grid_side'] <= result['sup_side'])


def test_lp_norms_are_ordered():
    report = experiments.run_lp(experiment_config(p_norms=[1, 2]), threads=1)

    assert all(row.mode == 'lp' for row in report.rows)
    assert not metric_rows(report, 'bias')
    for n in (32, 128):
        assert report.value(n, 'q0', 'l1_norm') <= report.value(n, 'q0', 'l2_norm') + 1e-12


def test_nested_path_requires_flag():
    with pytest.raises(ValueError, match='nested_path: true'):
        experiments.run_nested_path(experiment_config(), threads=1)


def test_nested_path_of_noiseless_zero_regression():
    config = experiment_config(mode='nested_path', nested_path=True, truth=zero_truth(),
                               n_grid=[32, 64, 128], replications=5)
    report = Simulation(config, threads=1).run()

    assert all(row.value == 0.0 for row in metric_rows(report, 'path_abs_error'))
    assert [row.n for row in metric_rows(report, 'path_improved_fraction')] == [128]
    assert report.note == experiments.NESTED_PATH_NOTE


def test_nested_path_pools_are_prefixes():
    config = experiment_config(mode='nested_path', nested_path=True, n_grid=[32, 64], replications=2)

    errors = experiments.nested_path_replication(config, 0)['error']
    assert errors.shape == (2, 1)
    np.testing.assert_array_equal(errors, experiments.nested_path_replication(config, 0)['error'])


def forest_config(**overrides):
    data = dict(
        mode='forest', d=2,
        truth={'regression': {'kind': 'linear', 'coeffs': [1.0, -1.0]},
               'noise': {'kind': 'gaussian', 'sigma': 0.3}},
        splitter={'kind': 'regular_adaptive', 'alpha': 0.3,
                  'schedule': {'kind': 'poly_node_size', 'beta': 0.6}},
        bootstrap={'i_scheme': {'kind': 'multinomial', 'm': 40},
                   'j_scheme': {'kind': 'multinomial', 'm': 40}},
        n_grid=[128, 256], replications=4, forest_size=3)
    data.update(overrides)
    return experiment_config(**data)


def test_forest_rows():
    report = Simulation(forest_config(), threads=1).run()
    metrics = {row.metric for row in report.rows}

    assert {'forest_mse', 'forest_bias', 'tree_mse', 'empty_skip_rate'} <= metrics


def test_single_tree_forest_matches_its_tree():
    report = Simulation(forest_config(forest_size=1), threads=1).run()

    for n in (128, 256):
        assert report.value(n, 'q0', 'forest_mse') == report.value(n, 'q0', 'tree_mse')


def test_forest_reproduces_constant_response():
    truth = {'regression': {'kind': 'linear', 'coeffs': [0.0, 0.0], 'intercept': 1.5}}
    report = Simulation(forest_config(truth=truth), threads=1).run()

    assert all(row.value == 0.0 for row in metric_rows(report, 'forest_mse'))
    assert all(row.value == 0.0 for row in metric_rows(report, 'tree_mse'))


def test_forest_needs_bootstrap():
    with pytest.raises(ValueError, match='bootstrap'):
        experiments.run_forest(experiment_config(), threads=1)


def test_error_metrics_skip_empty_predictions():
    metrics = experiments.error_metrics([1.0, np.nan, 3.0], [1])

    assert metrics['bias'] == (2.0, 1.0)
    assert metrics['variance'][0] == 1.0
    assert metrics['mse'][0] == 5.0
    assert metrics['l1_moment'][0] == 2.0


def test_quantile_with_error():
    estimate, std_err = experiments._quantile_and_error([3.0, 1.0, 2.0], 0.5)

    assert estimate == 2.0
    assert std_err >= 0.0
    assert math.isnan(experiments._quantile_and_error([], 0.5)[0])


def row(n, metric, value, query='q0'):
    return ResultRow('pointwise', n, query, (0.5,), metric, value, 0.0, 0.0, 1)


def test_trend_verdicts():
    rows = [row(10, 'mse', 1.0), row(20, 'mse', 0.5), row(40, 'mse', 0.7),
            row(10, 'leaf_mass_median', 1.0), row(20, 'leaf_mass_median', 2.0),
            row(10, 'bias', math.nan), row(20, 'bias', 0.1)]
    trends = experiments.trend_verdicts(rows)

    assert trends['mse|q0'] == 0.5
    assert trends['leaf_mass_median|q0'] == 1.0
    assert 'bias|q0' not in trends


def test_report_lookup_errors():
    report = experiments.ConvergenceReport(ExperimentMode.POINTWISE, [row(10, 'mse', 1.0)], {})

    assert report.series('q0', 'mse') == [1.0]
    with pytest.raises(KeyError):
        report.value(20, 'q0', 'mse')


def test_mode_runners_override_config_mode():
    config = experiment_config(truth=zero_truth(), sup_grid_resolution=4)

    assert experiments.run_pointwise(config, threads=1).mode is ExperimentMode.POINTWISE
    uniform = experiments.run_uniform(config, threads=1)
    assert uniform.mode is ExperimentMode.UNIFORM
    assert all(row.mode == 'uniform' for row in uniform.rows)
    assert experiments.run_experiment(config, threads=1).mode is ExperimentMode.POINTWISE


@pytest.mark.parametrize('splitter', [
    {'kind': 'centered', 'schedule': {'kind': 'log2_power_depth', 'beta': 0.5}},
    {'kind': 'regular_adaptive', 'alpha': 0.3, 'schedule': {'kind': 'poly_node_size', 'beta': 0.6}},
], ids=['centered', 'regular_adaptive'])
def test_tree_ignores_prediction_set_responses(splitter):
    config = experiment_config(
        d=2, splitter=splitter, n_grid=[400],
        truth={'regression': {'kind': 'linear', 'coeffs': [1.0, -1.0]},
               'noise': {'kind': 'gaussian', 'sigma': 0.3}})
    data, partition = experiments._draw_data(config, Experiment.SINGLE_TREE, 0, 0)
    responses = np.array(data.responses)
    rows = partition.i_indices
    responses[rows] = np.random.default_rng(7).permutation(responses[rows])
    shuffled = Dataset(data.features, responses)

    seeds = experiments._tree_seeds(config, Experiment.SINGLE_TREE, 0, 0)
    original = experiments.fit_tree(config, data, partition, seeds)
    permuted = experiments.fit_tree(config, shuffled, partition, seeds)
    assert permuted.tree.to_json() == original.tree.to_json()

    grid = experiments.evaluation_grid(4, 2)
    before = LeafTable(original.tree, original.i_sample, None, 1.0).predict(grid)[0]
    after = LeafTable(permuted.tree, permuted.i_sample, None, 1.0).predict(grid)[0]
    assert np.nanmax(np.abs(before - after)) > 0.0
