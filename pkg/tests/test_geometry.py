import numpy as np
import pytest

from honest_forest_toolkit import geometry
from honest_forest_toolkit.geometry import AxisRectangle, Tree, TreeBuilder
from honest_forest_toolkit.splitters import grow_centered, grow_modified_centered, grow_uniform


def enumerate_leaves(tree, node=0):
    if tree.is_leaf(node):
        return [node]
    return enumerate_leaves(tree, tree.left[node]) + enumerate_leaves(tree, tree.right[node])


def containing_leaf(tree, x):
    hits = [node for node in enumerate_leaves(tree) if geometry.contains(tree.cell(node), x)[0]]
    assert len(hits) == 1
    return hits[0]


def test_root_only_tree():
    tree = TreeBuilder(2).build()
    cell, counts = geometry.leaf_of(tree, [0.3, 0.9])

    np.testing.assert_array_equal(cell.lower, [0.0, 0.0])
    np.testing.assert_array_equal(cell.upper, [1.0, 1.0])
    assert counts.total == 0
    np.testing.assert_array_equal(counts.per_coordinate, [0, 0])


def test_centered_depth_two_cell():
    tree = grow_centered(1, [1.0], 2, theta=0)
    cell, counts = geometry.leaf_of(tree, [0.6])

    assert (cell.lower[0], cell.upper[0]) == (0.5, 0.75)
    assert counts.total == 2


def test_split_counts_follow_the_path():
    builder = TreeBuilder(2)
    _, right = builder.split(0, 0, 0.5)
    low, _ = builder.split(right, 1, 0.5)
    builder.split(low, 0, 0.75)
    tree = builder.build()

    _, counts = geometry.leaf_of(tree, [0.9, 0.1])
    assert counts.total == 3
    np.testing.assert_array_equal(counts.per_coordinate, [2, 1])


def test_cells_are_closed_on_the_right():
    builder = TreeBuilder(1)
    left, right = builder.split(0, 0, 0.5)
    tree = builder.build()

    assert tree.leaf_node([0.5]) == left
    assert tree.leaf_node([0.0]) == left
    assert tree.leaf_node([1.0]) == right


@pytest.mark.parametrize('lower, upper, volume', [
    ([0.0, 0.0], [1.0, 1.0], 1.0),
    ([0.25, 0.5], [0.75, 1.0], 0.25),
    ([0.0], [0.125], 0.125),
])
def test_rect_volume(lower, upper, volume):
    assert geometry.rect_volume(AxisRectangle(lower, upper)) == volume


@pytest.mark.parametrize('s', [0, 1, 3, 6])
def test_centered_leaves_have_dyadic_volume(s):
    tree = grow_centered(2, [0.5, 0.5], s, theta=s)

    assert geometry.min_leaf_volume(tree) == 2.0 ** -s
    np.testing.assert_array_equal(tree.leaf_volumes(), np.full(2 ** s, 2.0 ** -s))


def test_min_leaf_volume_matches_exhaustive_enumeration():
    tree = grow_uniform(3, 5, theta=11)
    volumes = [geometry.rect_volume(tree.cell(node)) for node in enumerate_leaves(tree)]

    assert geometry.min_leaf_volume(tree) == pytest.approx(min(volumes), rel=1e-15)


def test_max_side_length_of_modified_centered_tree():
    tree = grow_modified_centered(2, (2, 2), 4, theta=0)

    assert geometry.max_side_length(tree, 0) == 0.25
    assert geometry.max_side_length(tree, 1) == 0.25


def test_centered_max_side_length_in_one_dimension():
    tree = grow_centered(1, [1.0], 5, theta=0)

    assert geometry.max_side_length(tree, 0) == 2.0 ** -5


def test_leaf_nodes_matches_leaf_node_and_enumeration():
    tree = grow_uniform(2, 6, theta=3)
    points = np.random.default_rng(0).random((200, 2))

    nodes = tree.leaf_nodes(points)
    for point, node in zip(points[:25], nodes[:25]):
        assert node == tree.leaf_node(point)
        assert node == containing_leaf(tree, point)


def test_leaves_partition_the_cube():
    tree = grow_uniform(2, 4, theta=5)

    assert tree.n_leaves == 16
    assert tree.leaf_volumes().sum() == pytest.approx(1.0)


def test_json_round_trip():
    tree = grow_uniform(2, 4, theta=8)
    restored = Tree.from_json(tree.to_json())

    assert restored.n_leaves == tree.n_leaves
    points = np.random.default_rng(1).random((50, 2))
    for a, b in zip(tree.leaf_nodes(points), restored.leaf_nodes(points)):
        np.testing.assert_array_equal(tree.lower[a], restored.lower[b])
        np.testing.assert_array_equal(tree.upper[a], restored.upper[b])
        np.testing.assert_array_equal(tree.counts[a], restored.counts[b])


def test_json_rejects_inconsistent_leaf():
    text = ('{"d": 1, "nodes": [{"feature": 0, "threshold": 0.5}, '
            '{"leaf": {"lower": [0.0], "upper": [0.5], "counts": [1]}}, '
            '{"leaf": {"lower": [0.5], "upper": [0.9], "counts": [1]}}]}')

    with pytest.raises(ValueError, match='does not match'):
        Tree.from_json(text)


@pytest.mark.parametrize('threshold', [0.0, 1.0, 1.5])
def test_split_outside_cell_rejected(threshold):
    with pytest.raises(ValueError, match='outside the cell'):
        TreeBuilder(1).split(0, 0, threshold)


def test_query_outside_cube_rejected():
    tree = TreeBuilder(2).build()

    with pytest.raises(ValueError, match=r'\[0, 1\]\^d'):
        tree.leaf_node([0.5, 1.2])
    with pytest.raises(ValueError, match='d=2'):
        tree.leaf_nodes(np.zeros((3, 3)))


def test_interval_mask_closes_zero():
    values = np.array([0.0, 0.25, 0.5, 0.75])

    np.testing.assert_array_equal(geometry.interval_mask(values, 0.0, 0.5), [True, True, True, False])
    np.testing.assert_array_equal(geometry.interval_mask(values, 0.25, 0.75), [False, False, True, True])
