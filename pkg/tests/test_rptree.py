import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rpknn.projection import RngStream, project
from rpknn.rptree import RPTree, build_tree, max_depth, query_leaf


def _expected_leaf_sizes(n, depth):
    """Sizes produced by repeatedly splitting into ceil/floor halves."""
    sizes = [n]
    for _ in range(depth):
        sizes = [s for m in sizes for s in ((m + 1) // 2, m // 2)]
    return sizes


def test_depth_zero_is_one_leaf(rng):
    data = rng.normal(size=(13, 3)).astype(np.float32)
    tree = build_tree(data, 0, 1.0, RngStream(0))
    assert len(tree.leaf_buckets) == 1
    assert sorted(tree.leaf_buckets[0].tolist()) == list(range(13))
    assert tree.thresholds.size == 0


def test_four_points_on_a_line():
    data = np.array([[0.0], [1.0], [2.0], [3.0]], dtype=np.float32)
    tree = build_tree(data, 1, 1.0, RngStream(11))
    v = tree.level_vectors[0]
    p = np.array([project(row, v) for row in data])
    by_proj = np.argsort(p)
    left, right = tree.leaf_buckets
    assert sorted(left.tolist()) == sorted(by_proj[:2].tolist())
    assert sorted(right.tolist()) == sorted(by_proj[2:].tolist())
    assert tree.thresholds[0] == (p[by_proj[1]] + p[by_proj[2]]) / 2
    # a query projecting below the threshold lands on the left
    q = data[by_proj[0]]
    assert sorted(query_leaf(tree, q).tolist()) == sorted(by_proj[:2].tolist())


def test_identical_points_split_by_index():
    data = np.ones((7, 4), dtype=np.float32)
    tree = build_tree(data, 2, 0.5, RngStream(2))
    assert [b.tolist() for b in tree.leaf_buckets] == [[0, 1], [2, 3], [4, 5], [6]]


def test_too_deep_names_max_depth(rng):
    data = rng.normal(size=(1000, 2)).astype(np.float32)
    with pytest.raises(ValueError, match="maximum admissible depth is 9"):
        build_tree(data, 10, 1.0, RngStream(0))
    assert max_depth(1000) == 9


def test_stop_depth_zero_returns_everything(rng):
    data = rng.normal(size=(50, 5)).astype(np.float32)
    tree = build_tree(data, 3, 0.5, RngStream(1))
    assert sorted(query_leaf(tree, data[0], 0).tolist()) == list(range(50))


def test_query_dimension_mismatch(rng):
    data = rng.normal(size=(50, 5)).astype(np.float32)
    tree = build_tree(data, 3, 0.5, RngStream(1))
    with pytest.raises(ValueError):
        query_leaf(tree, np.zeros(4))
    with pytest.raises(ValueError):
        query_leaf(tree, data[0], 4)


def test_leaf_sizes_for_1000_points(rng):
    data = rng.normal(size=(1000, 8)).astype(np.float32)
    tree = build_tree(data, 5, 0.5, RngStream(3))
    sizes = sorted(len(b) for b in tree.leaf_buckets)
    assert len(sizes) == 32
    assert set(sizes) == {31, 32}
    assert sizes == sorted(_expected_leaf_sizes(1000, 5))


@given(
    n=st.integers(1, 300),
    d=st.integers(1, 20),
    depth_frac=st.floats(0, 1),
    seed=st.integers(0, 2**64 - 1),
)
def test_structure_invariants(n, d, depth_frac, seed):
    gen = np.random.default_rng(seed % 2**32)
    data = gen.normal(size=(n, d)).astype(np.float32)
    depth = int(depth_frac * max_depth(n))
    tree = build_tree(data, depth, 1 / np.sqrt(d), RngStream(seed))
    buckets = tree.leaf_buckets
    # partition
    assert np.array_equal(np.sort(np.concatenate(buckets)), np.arange(n))
    # balance
    assert sorted(len(b) for b in buckets) == sorted(_expected_leaf_sizes(n, depth))
    # self-consistency: each point routes to its own leaf
    for b in buckets:
        for i in b[:3]:
            assert i in query_leaf(tree, data[i])
    # determinism
    again = build_tree(data, depth, 1 / np.sqrt(d), RngStream(seed))
    assert np.array_equal(tree.order, again.order) and np.array_equal(tree.thresholds, again.thresholds)


@given(seed=st.integers(0, 2**32 - 1), stop=st.integers(0, 5))
def test_truncation_matches_shallower_build(seed, stop):
    gen = np.random.default_rng(seed)
    data = gen.normal(size=(200, 6)).astype(np.float32)
    deep = build_tree(data, 5, 0.5, RngStream(seed, 1))
    shallow = build_tree(data, stop, 0.5, RngStream(seed, 1))
    for q in gen.normal(size=(5, 6)):
        a = np.sort(query_leaf(deep, q, stop))
        b = np.sort(query_leaf(shallow, q))
        assert np.array_equal(a, b)


def test_depth_monotone_per_tree(rng):
    data = rng.normal(size=(400, 10)).astype(np.float32)
    tree = build_tree(data, 6, 0.4, RngStream(8))
    for q in rng.normal(size=(20, 10)):
        prev = set(query_leaf(tree, q, 0).tolist())
        for s in range(1, 7):
            cur = set(query_leaf(tree, q, s).tolist())
            assert cur <= prev
            prev = cur


def test_tree_is_immutable_dataclass(rng):
    data = rng.normal(size=(8, 2)).astype(np.float32)
    tree = build_tree(data, 1, 1.0, RngStream(0))
    assert isinstance(tree, RPTree)
    with pytest.raises(AttributeError):
        tree.depth = 3
