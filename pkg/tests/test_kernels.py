"""Both kernel backends must agree bit for bit."""
import numpy as np
import pytest

from rpknn._kernels import _numba as nb
from rpknn._kernels import _numpy as npk
from rpknn.exact import exhaustive_knn
from rpknn.projection import RngStream, nnz_for, sample_sparse_vector


def _levels(d, depth, a, seed):
    nnz = nnz_for(d, a)
    idx = np.zeros((max(depth, 0), nnz), dtype=np.int64)
    w = np.zeros((max(depth, 0), nnz))
    rng = RngStream(seed)
    for s in range(depth):
        v = sample_sparse_vector(d, a, rng)
        idx[s], w[s] = v.indices, v.weights
    return idx, w


def _forest(data, T, depth, a, seed, impl):
    parts = []
    for t in range(T):
        idx, w = _levels(data.shape[1], depth, a, seed * 1000 + t)
        order, thr, offs = impl.build_tree(data, idx, w)
        parts.append((idx, w, thr, order, offs))
    return [np.stack(p) for p in zip(*parts)]


@pytest.fixture(scope="module")
def data():
    return np.random.default_rng(5).normal(size=(700, 37)).astype(np.float32)


def test_distances(data):
    q = np.random.default_rng(1).normal(size=37)
    rows = np.array([5, 3, 600, 3], dtype=np.int64)
    assert np.array_equal(nb.sq_dists(data, rows, q), npk.sq_dists(data, rows, q))
    assert np.array_equal(nb.sq_dists_all(data, q), npk.sq_dists_all(data, q))


def test_distances_are_sequential_sums(data):
    q = np.random.default_rng(2).normal(size=37)
    expected = np.empty(data.shape[0])
    for i, row in enumerate(data):
        acc = 0.0
        for x, y in zip(row.astype(np.float64), q):
            acc += (x - y) * (x - y)
        expected[i] = acc
    assert np.array_equal(npk.sq_dists_all(data, q), expected)


def test_projections(data):
    idx, w = _levels(37, 1, 0.3, 9)
    q = data[4].astype(np.float64)
    assert nb.project_point(q, idx[0], w[0]) == npk.project_point(q, idx[0], w[0])
    assert np.array_equal(nb.project_all(data, idx[0], w[0]), npk.project_all(data, idx[0], w[0]))


@pytest.mark.parametrize("depth", [0, 1, 4, 9])
def test_build_and_descend(data, depth):
    idx, w = _levels(37, depth, 0.2, depth)
    a = nb.build_tree(data, idx, w)
    b = npk.build_tree(data, idx, w)
    for x, y in zip(a, b):
        assert np.array_equal(x, y)
    thr = a[1]
    for q in np.random.default_rng(3).normal(size=(10, 37)):
        for stop in range(depth + 1):
            assert nb.descend(q, idx, w, thr, stop) == npk.descend(q, idx, w, thr, stop)


def test_build_with_ties():
    data = np.repeat(np.arange(4, dtype=np.float32), 5).reshape(-1, 1)
    idx = np.zeros((3, 1), dtype=np.int64)
    w = np.ones((3, 1))
    for x, y in zip(nb.build_tree(data, idx, w), npk.build_tree(data, idx, w)):
        assert np.array_equal(x, y)


@pytest.mark.parametrize("l_use", [1, 3, 6])
def test_vote_counts(data, l_use):
    forest = _forest(data, 8, 6, 0.2, 4, nb)
    for q in np.random.default_rng(7).normal(size=(5, 37)):
        a = nb.vote_counts(q, *forest, l_use)
        b = npk.vote_counts(q, *forest, l_use)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
        assert np.all(np.diff(a[0]) > 0)


def test_select_k_matches_and_breaks_ties_by_index(data):
    q = data[10].astype(np.float64)
    cand = np.arange(0, 700, 3, dtype=np.int64)
    a = nb.select_k(data, q, cand, 7)
    b = npk.select_k(data, q, cand, 7)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    dup = np.zeros((6, 2), dtype=np.float32)
    for impl in (nb, npk):
        got, _ = impl.select_k(dup, np.zeros(2), np.array([4, 1, 5, 0], dtype=np.int64), 3)
        assert got.tolist() == [0, 1, 4]


def test_tune_stats(data):
    forest = _forest(data, 6, 5, 0.2, 8, nb)
    qrows = np.array([0, 17, 300, 699], dtype=np.int64)
    gt = np.stack([exhaustive_knn(data, data[i], 4, exclude=i).indices for i in qrows]).astype(np.int64)
    a = nb.tune_stats(data, qrows, gt, *forest)
    b = npk.tune_stats(data, qrows, gt, *forest)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_fnv1a64_reference_values():
    # published FNV-1a 64 test vectors
    for impl in (nb, npk):
        assert int(impl.fnv1a64(np.frombuffer(b"", np.uint8))) == 0xCBF29CE484222325
        assert int(impl.fnv1a64(np.frombuffer(b"a", np.uint8))) == 0xAF63DC4C8601EC8C
        assert int(impl.fnv1a64(np.frombuffer(b"foobar", np.uint8))) == 0x85944171F73967E8
