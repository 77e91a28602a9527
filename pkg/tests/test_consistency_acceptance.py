import math

import pytest

from honest_forest_toolkit.config import ExperimentConfig
from honest_forest_toolkit.experiments import GRID_QUERY_ID, Simulation
from honest_forest_toolkit.reporting import Reporting
from honest_forest_toolkit.splitters import Schedule


# Acceptance tests for the Monte Carlo consistency experiments

TWO_THIRDS = 2.0 / 3.0
# centered depths ceil(log2(n / 2) / 3) = 3, 4, 5 grow at every step
N_GRID = [2 ** 10, 2 ** 13, 2 ** 16]
DEPTH_SCHEDULE = {'kind': 'log2_power_depth', 'beta': TWO_THIRDS}

SINUSOID_TRUTH = {
    'regression': {'kind': 'sinusoid_additive', 'amplitudes': [1.0, 0.0], 'freqs': [1.0, 0.0],
                   'slopes': [0.0, 1.0]},
    'noise': {'kind': 'gaussian', 'sigma': 0.5},
}


def config_from(**fields):
    data = {'d': 2, 'query_points': [[0.5, 0.5]], 'master_seed': 2024}
    data.update(fields)
    return ExperimentConfig.from_dict(data)


def dropped_by(first, last, k=3.0):
    return last.value + k * math.hypot(first.std_err, last.std_err) < first.value


@pytest.fixture(scope='module')
def pointwise_report():
    # q0 sits on the midpoint splits, q1 off every dyadic boundary
    config = config_from(
        mode='pointwise', truth=SINUSOID_TRUTH, n_grid=N_GRID, replications=400,
        query_points=[[0.5, 0.5], [0.3, 0.7]],
        splitter={'kind': 'centered', 'schedule': DEPTH_SCHEDULE})
    return Simulation(config, threads=2).run()


def test_pointwise_error_shrinks(pointwise_report):
    report = pointwise_report

    assert report.trends['mse|q1'] == 1.0
    for metric in ('mse', 'l1_norm'):
        assert dropped_by(report.row(N_GRID[0], 'q1', metric), report.row(N_GRID[-1], 'q1', metric)), metric


def test_pointwise_leaf_mass_grows(pointwise_report):
    assert pointwise_report.trends['leaf_mass_median|q0'] == 1.0
    assert pointwise_report.trends['leaf_mass_median|q1'] == 1.0
    assert all(row.empty_rate < 0.01 for row in pointwise_report.rows)


def test_density_error_halves(pointwise_report):
    first = math.sqrt(pointwise_report.value(N_GRID[0], 'q0', 'density_mse'))
    last = math.sqrt(pointwise_report.value(N_GRID[-1], 'q0', 'density_mse'))

    assert last < 0.5 * first


def test_modified_centered_uniform_errors_shrink():
    config = config_from(
        mode='uniform', truth=SINUSOID_TRUTH, n_grid=N_GRID, replications=50,
        sup_grid_resolution=33,
        splitter={'kind': 'modified_centered', 'rotation_periods': [2, 2], 'schedule': DEPTH_SCHEDULE})
    report = Simulation(config, threads=2).run()

    assert report.trends[f'sup_density_error|{GRID_QUERY_ID}'] == 1.0
    assert report.trends[f'sup_numerator_error|{GRID_QUERY_ID}'] == 1.0
    for n in N_GRID:
        depth = Schedule.from_dict(DEPTH_SCHEDULE).evaluate(n // 2)
        assert report.value(n, GRID_QUERY_ID, 'min_volume') == 2.0 ** -depth


def test_forest_reduces_variance():
    n_grid = [2 ** 12, 2 ** 14]
    subsample = {'kind': 'multinomial', 'm_schedule': {'kind': 'poly_subsample', 'gamma': 0.6}}
    config = config_from(
        mode='forest', truth=SINUSOID_TRUTH, n_grid=n_grid, replications=200, forest_size=50,
        splitter={'kind': 'regular_adaptive', 'alpha': 0.2,
                  'schedule': {'kind': 'poly_node_size', 'beta': TWO_THIRDS}},
        bootstrap={'i_scheme': subsample, 'j_scheme': subsample})
    report = Simulation(config, threads=2).run()

    for n in n_grid:
        assert report.value(n, 'q0', 'forest_variance') < report.value(n, 'q0', 'tree_variance')
        assert report.value(n, 'q0', 'empty_skip_rate') < 0.01
    assert dropped_by(*(report.row(n, 'q0', 'forest_mse') for n in n_grid))


def test_nested_paths_improve():
    config = ExperimentConfig.from_dict({
        'mode': 'nested_path', 'nested_path': True, 'd': 1,
        'truth': {'regression': {'kind': 'linear', 'coeffs': [1.0]},
                  'noise': {'kind': 'gaussian', 'sigma': 0.05}},
        'splitter': {'kind': 'centered', 'schedule': DEPTH_SCHEDULE},
        'n_grid': [2 ** 10, 2 ** 16], 'replications': 100, 'query_points': [[1.0 / 3.0]],
        'master_seed': 31,
    })
    report = Simulation(config, threads=2).run()

    assert report.value(2 ** 16, 'q0', 'path_improved_fraction') >= 0.9
    assert report.note


def test_results_do_not_depend_on_worker_count(tmp_path):
    config = config_from(
        mode='pointwise', truth=SINUSOID_TRUTH, n_grid=[64, 256, 1024], replications=16,
        query_points=[[0.5, 0.5], [0.1, 0.9]],
        splitter={'kind': 'uniform', 'schedule': {'kind': 'log_depth', 'eps': 0.5}})

    outputs = []
    for threads in (1, 2, 8):
        out_dir = tmp_path / f'threads_{threads}'
        Reporting(config, str(out_dir)).write(Simulation(config, threads=threads).run())
        outputs.append((out_dir / 'results.csv').read_bytes())

    assert outputs[0] == outputs[1] == outputs[2]
