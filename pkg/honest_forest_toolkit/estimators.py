import logging
import math

from collections import namedtuple

import numpy as np

from .geometry import interval_mask


LOG = logging.getLogger()

LeafStats = namedtuple('LeafStats', ['n_in_leaf', 'per_coordinate_in_interval', 'response_sum'])
ForestPrediction = namedtuple('ForestPrediction', ['value', 'n_trees', 'skipped_count'])


class Prediction(namedtuple('Prediction', ['value', 'leaf_volume', 'stats'])):
    """A tree prediction; value is None (Empty) when the leaf holds no weight."""
    __slots__ = ()

    @property
    def is_empty(self):
        return self.value is None


def _weights(weights, n):
    if weights is None:
        return np.ones(n)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (n,):
        raise ValueError(f'{weights.size} weights for {n} prediction-set observations')
    return weights


def _normalizer(n_i, mean_w, volume):
    return n_i * mean_w * volume


def _leaf_volume(tree, node):
    return float(np.prod(tree.upper[node] - tree.lower[node]))


def leaf_stats(tree, i_sample, x, weights=None):
    w = _weights(weights, i_sample.n)
    node = tree.leaf_node(x)
    features = i_sample.features

    coordinate_masks = [interval_mask(features[:, j], tree.lower[node, j], tree.upper[node, j])
                        for j in range(tree.d)]
    in_leaf = np.logical_and.reduce(coordinate_masks)
    return LeafStats(
        n_in_leaf=math.fsum(w[in_leaf]),
        per_coordinate_in_interval=np.array([math.fsum(w[mask]) for mask in coordinate_masks]),
        response_sum=math.fsum(w[in_leaf] * i_sample.responses[in_leaf]),
    )


def tree_predict(tree, i_sample, x, weights=None):
    stats = leaf_stats(tree, i_sample, x, weights)
    volume = _leaf_volume(tree, tree.leaf_node(x))
    value = stats.response_sum / stats.n_in_leaf if stats.n_in_leaf > 0.0 else None
    return Prediction(value, volume, stats)


def density_estimate(tree, i_sample, x, weights=None, mean_w=1.0):
    stats = leaf_stats(tree, i_sample, x, weights)
    volume = _leaf_volume(tree, tree.leaf_node(x))
    return stats.n_in_leaf / _normalizer(i_sample.n, mean_w, volume)


def m_numerator_estimate(tree, i_sample, x, weights=None, mean_w=1.0):
    # computed as T * f_hat so the factorization holds exactly
    prediction = tree_predict(tree, i_sample, x, weights)
    if prediction.is_empty:
        return 0.0
    density = prediction.stats.n_in_leaf / _normalizer(i_sample.n, mean_w, prediction.leaf_volume)
    return prediction.value * density


def forest_predict(trees_and_weights, i_sample, x):
    """
    Average tree predictions at x over trees whose leaf is non-empty.

    Empty trees are skipped and counted; the forest is Empty only when every
    tree is. Values are reduced in tree order.
    """
    if not trees_and_weights:
        raise ValueError('a forest needs at least one tree')

    return combine_tree_values([tree_predict(tree, i_sample, x, weights).value
                                for tree, weights in trees_and_weights])


def combine_tree_values(values):
    """Forest average of per-tree values in tree order; None or NaN marks an Empty tree."""
    kept = [value for value in values if value is not None and not math.isnan(value)]
    skipped = len(values) - len(kept)
    value = math.fsum(kept) / len(kept) if kept else None
    return ForestPrediction(value, len(values), skipped)


class LeafTable:
    """
    Per-leaf weighted masses and response sums of one tree on the prediction set.

    Built once per fitted tree so that many query points (and the whole
    evaluation grid) are answered without rescanning the sample. Sums use
    fsum, so every entry equals the one leaf_stats computes for the same leaf.
    """
    def __init__(self, tree, i_sample, weights=None, mean_w=1.0):
        self.tree = tree
        self.sample = i_sample
        self.weights = _weights(weights, i_sample.n)
        self.mean_w = mean_w
        self._interval_cache = {}

        self.mass = np.zeros(tree.n_nodes)
        self.response_sum = np.zeros(tree.n_nodes)
        point_leaves = tree.leaf_nodes(i_sample.features)
        order = np.argsort(point_leaves, kind='stable')
        leaves, starts = np.unique(point_leaves[order], return_index=True)
        for leaf, members in zip(leaves, np.split(order, starts[1:])):
            w = self.weights[members]
            self.mass[leaf] = math.fsum(w)
            self.response_sum[leaf] = math.fsum(w * i_sample.responses[members])

        self.volume = np.prod(tree.upper - tree.lower, axis=1)

    def interval_mass(self, j, a, b):
        key = (j, a, b)
        if key not in self._interval_cache:
            mask = interval_mask(self.sample.features[:, j], a, b)
            self._interval_cache[key] = math.fsum(self.weights[mask])
        return self._interval_cache[key]

    def per_coordinate_in_interval(self, node):
        return np.array([self.interval_mass(j, self.tree.lower[node, j], self.tree.upper[node, j])
                         for j in range(self.tree.d)])

    def stats(self, node):
        return LeafStats(self.mass[node], self.per_coordinate_in_interval(node),
                         self.response_sum[node])

    def predict(self, points):
        """Return (tree value with NaN for Empty, density, numerator) at each point."""
        nodes = self.tree.leaf_nodes(points)
        mass = self.mass[nodes]
        nonempty = mass > 0.0
        values = np.full(nodes.size, np.nan)
        values[nonempty] = self.response_sum[nodes][nonempty] / mass[nonempty]
        density = mass / _normalizer(self.sample.n, self.mean_w, self.volume[nodes])
        numerator = np.where(nonempty, np.where(nonempty, values, 0.0) * density, 0.0)
        return values, density, numerator

    def balance_fractions(self, node):
        return self.per_coordinate_in_interval(node) / (self.sample.n * self.mean_w)

    def sup_balance(self):
        leaves = self.tree.leaves
        fractions = np.array([self.per_coordinate_in_interval(leaf) for leaf in leaves])
        return fractions.max(axis=0) / (self.sample.n * self.mean_w)
