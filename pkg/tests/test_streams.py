import numpy as np
import pytest

from honest_forest_toolkit import streams
from honest_forest_toolkit.streams import Experiment, Role


def draws(seed, size=5):
    return streams.make_generator(seed).random(size)


def test_same_key_gives_same_stream():
    first = streams.stream_seed(42, Experiment.SINGLE_TREE, 1, 3, 0, Role.DATA)
    second = streams.stream_seed(42, Experiment.SINGLE_TREE, 1, 3, 0, Role.DATA)

    np.testing.assert_array_equal(draws(first), draws(second))


@pytest.mark.parametrize('changed', [
    {'experiment': Experiment.FOREST},
    {'n_index': 2},
    {'replication': 4},
    {'tree_index': 1},
    {'role': Role.THETA},
])
def test_every_key_component_moves_the_stream(changed):
    base = dict(experiment=Experiment.SINGLE_TREE, n_index=1, replication=3, tree_index=0,
                role=Role.DATA)
    other = dict(base, **changed)

    assert not np.array_equal(draws(streams.stream_seed(7, **base)),
                              draws(streams.stream_seed(7, **other)))


def test_replication_streams_do_not_depend_on_each_other():
    before = draws(streams.stream_seed(7, replication=0))
    draws(streams.stream_seed(7, replication=1), size=1000)
    after = draws(streams.stream_seed(7, replication=0))

    np.testing.assert_array_equal(before, after)


def test_master_seed_changes_stream():
    assert not np.array_equal(draws(streams.stream_seed(1)), draws(streams.stream_seed(2)))


def test_negative_master_seed_rejected():
    with pytest.raises(ValueError, match='master_seed'):
        streams.stream_seed(-1)


def test_make_generator_passes_generators_through():
    rng = np.random.default_rng(0)

    assert streams.make_generator(rng) is rng


def test_make_generator_uses_philox():
    rng = streams.make_generator(5)

    assert isinstance(rng.bit_generator, np.random.Philox)
    np.testing.assert_array_equal(rng.random(3), streams.make_generator(5).random(3))
