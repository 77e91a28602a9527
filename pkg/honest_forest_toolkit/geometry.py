import json
import logging

from collections import namedtuple

import numpy as np


LOG = logging.getLogger()


AxisRectangle = namedtuple('AxisRectangle', ['lower', 'upper'])
SplitCounts = namedtuple('SplitCounts', ['total', 'per_coordinate'])

LEAF = -1


def rect_volume(rect):
    return float(np.prod(np.asarray(rect.upper) - np.asarray(rect.lower)))


def side_lengths(rect):
    return np.asarray(rect.upper) - np.asarray(rect.lower)


def interval_mask(values, a, b):
    # cells are (a, b] except that a lower bound of 0 is closed
    if a == 0.0:
        return values <= b
    return (values > a) & (values <= b)


def contains(rect, points):
    points = np.atleast_2d(points)
    inside = np.ones(points.shape[0], dtype=bool)
    for j, (a, b) in enumerate(zip(rect.lower, rect.upper)):
        inside &= interval_mask(points[:, j], a, b)
    return inside


class Tree:
    """
    Binary axis-aligned partition of [0,1]^d stored as flat node arrays.

    Every node keeps its cell and split counts; internal nodes carry a
    feature and threshold and leaves have feature == LEAF. Adaptive trees
    also keep the weighted split-set mass of every node.
    """
    def __init__(self, d, feature, threshold, left, right, lower, upper, counts,
                 node_mass=None, mass_slack=0.0, diagnostics=()):
        self.d = d
        self.feature = np.asarray(feature, dtype=np.intp)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.intp)
        self.right = np.asarray(right, dtype=np.intp)
        self.lower = np.asarray(lower, dtype=float).reshape(-1, d)
        self.upper = np.asarray(upper, dtype=float).reshape(-1, d)
        self.counts = np.asarray(counts, dtype=np.int64).reshape(-1, d)
        self.node_mass = None if node_mass is None else np.asarray(node_mass, dtype=float)
        self.mass_slack = mass_slack
        self.diagnostics = tuple(diagnostics)

        self.leaves = np.flatnonzero(self.feature == LEAF)
        self.depth = self.counts.sum(axis=1)
        self.max_depth = int(self.depth.max())

        for array in (self.feature, self.threshold, self.left, self.right,
                      self.lower, self.upper, self.counts):
            array.flags.writeable = False

    @property
    def n_nodes(self):
        return self.feature.size

    @property
    def n_leaves(self):
        return self.leaves.size

    def is_leaf(self, node):
        return self.feature[node] == LEAF

    def cell(self, node):
        return AxisRectangle(self.lower[node].copy(), self.upper[node].copy())

    def split_counts(self, node):
        return SplitCounts(int(self.depth[node]), self.counts[node].copy())

    def leaf_node(self, x):
        x = np.asarray(x, dtype=float)
        _check_points(x[None, :], self.d)
        node = 0
        while self.feature[node] != LEAF:
            if x[self.feature[node]] <= self.threshold[node]:
                node = self.left[node]
            else:
                node = self.right[node]
        return int(node)

    def leaf_nodes(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        _check_points(points, self.d)
        nodes = np.zeros(points.shape[0], dtype=np.intp)
        for _ in range(self.max_depth):
            active = np.flatnonzero(self.feature[nodes] != LEAF)
            if active.size == 0:
                break
            current = nodes[active]
            go_left = points[active, self.feature[current]] <= self.threshold[current]
            nodes[active] = np.where(go_left, self.left[current], self.right[current])
        return nodes

    def leaf_volumes(self):
        return np.prod(self.upper[self.leaves] - self.lower[self.leaves], axis=1)

    def leaf_side_lengths(self):
        return self.upper[self.leaves] - self.lower[self.leaves]

    def to_json(self):
        document = []

        def visit(node):
            if self.feature[node] == LEAF:
                document.append({'leaf': {
                    'lower': self.lower[node].tolist(),
                    'upper': self.upper[node].tolist(),
                    'counts': self.counts[node].tolist(),
                }})
                return
            document.append({'feature': int(self.feature[node]),
                             'threshold': float(self.threshold[node])})
            visit(self.left[node])
            visit(self.right[node])

        visit(0)
        return json.dumps({'d': self.d, 'nodes': document})

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        nodes = iter(data['nodes'])
        builder = TreeBuilder(data['d'])

        def rebuild(node):
            entry = next(nodes)
            if 'leaf' in entry:
                leaf = entry['leaf']
                if (not np.array_equal(leaf['lower'], builder.lower[node])
                        or not np.array_equal(leaf['upper'], builder.upper[node])):
                    raise ValueError(f'leaf cell of node {node} does not match its splits')
                return
            left, right = builder.split(node, entry['feature'], entry['threshold'])
            rebuild(left)
            rebuild(right)

        rebuild(0)
        return builder.build()


class TreeBuilder:
    def __init__(self, d):
        self.d = d
        self.feature = [LEAF]
        self.threshold = [np.nan]
        self.left = [LEAF]
        self.right = [LEAF]
        self.lower = [np.zeros(d)]
        self.upper = [np.ones(d)]
        self.counts = [np.zeros(d, dtype=np.int64)]

    def split(self, node, feature, threshold):
        if not self.lower[node][feature] < threshold < self.upper[node][feature]:
            raise ValueError(f'threshold {threshold} lies outside the cell of node {node} '
                             f'on feature {feature}')
        self.feature[node] = feature
        self.threshold[node] = threshold

        children = []
        for side in ('left', 'right'):
            lower = self.lower[node].copy()
            upper = self.upper[node].copy()
            if side == 'left':
                upper[feature] = threshold
            else:
                lower[feature] = threshold
            counts = self.counts[node].copy()
            counts[feature] += 1

            self.feature.append(LEAF)
            self.threshold.append(np.nan)
            self.left.append(LEAF)
            self.right.append(LEAF)
            self.lower.append(lower)
            self.upper.append(upper)
            self.counts.append(counts)
            children.append(len(self.feature) - 1)

        self.left[node], self.right[node] = children
        return tuple(children)

    def build(self, node_mass=None, mass_slack=0.0, diagnostics=()):
        return Tree(self.d, self.feature, self.threshold, self.left, self.right,
                    np.array(self.lower), np.array(self.upper), np.array(self.counts),
                    node_mass=node_mass, mass_slack=mass_slack, diagnostics=diagnostics)


def _check_points(points, d):
    if points.shape[1] != d:
        raise ValueError(f'points have {points.shape[1]} coordinates, tree has d={d}')
    if np.any(points < 0.0) or np.any(points > 1.0):
        raise ValueError('query points must lie in [0, 1]^d')


def leaf_of(tree, x):
    node = tree.leaf_node(x)
    return tree.cell(node), tree.split_counts(node)


def min_leaf_volume(tree):
    return float(tree.leaf_volumes().min())


def max_side_length(tree, j):
    return float(tree.leaf_side_lengths()[:, j].max())
