import logging

from enum import Enum

import numpy as np


LOG = logging.getLogger()


class Role(Enum):
    DATA = 0
    THETA = 1
    I_WEIGHTS = 2
    J_WEIGHTS = 3
    SPLIT = 4


class Experiment(Enum):
    SINGLE_TREE = 0
    NESTED_PATH = 1
    FOREST = 2


def stream_seed(master_seed, experiment=Experiment.SINGLE_TREE, n_index=0, replication=0,
                tree_index=0, role=Role.DATA):
    """
    Derive the seed of one random stream.

    The stream is keyed by (experiment, n_index, replication, tree_index, role)
    below the master seed, so each key addresses its own Philox stream and
    changing one replication never moves the draws of another.
    """
    if master_seed < 0:
        raise ValueError(f'master_seed must be non-negative, got {master_seed}')

    spawn_key = (experiment.value, n_index, replication, tree_index, role.value)
    return np.random.SeedSequence(entropy=master_seed, spawn_key=spawn_key)


def make_generator(seed):
    if isinstance(seed, np.random.Generator):
        return seed

    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)

    return np.random.Generator(np.random.Philox(seed))
