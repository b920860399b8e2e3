from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rpknn import FormatError, IntegrityError
from rpknn.dataset import generate_synthetic
from rpknn.exact import FallbackLevel, exhaustive_knn
from rpknn.mrpt import (
    AutoTuneConfig,
    MRPTIndex,
    approx_knn,
    autotune,
    build_index,
    candidates,
    default_l_max,
    load_index,
    save_index,
)
from rpknn.rptree import RPTree, query_leaf


def _hand_tree(left):
    rest = [i for i in range(5) if i not in left]
    return RPTree(
        depth=1,
        level_indices=np.zeros((1, 1), dtype=np.int64),
        level_weights=np.ones((1, 1)),
        thresholds=np.array([np.inf]),
        order=np.array(left + rest, dtype=np.int64),
        leaf_offsets=np.array([0, len(left), 5], dtype=np.int64),
        n=5,
        d=1,
    )


@pytest.fixture
def hand_index():
    data = np.arange(5, dtype=np.float32).reshape(5, 1)
    return MRPTIndex(data, [_hand_tree([1, 2]), _hand_tree([2, 3]), _hand_tree([2, 4])], seed=0)


def test_hand_forest_votes(hand_index):
    assert candidates(hand_index, [0.0], v=2).tolist() == [2]
    assert candidates(hand_index, [0.0], v=3).tolist() == [2]
    assert candidates(hand_index, [0.0], v=1).tolist() == [1, 2, 3, 4]


def test_hand_forest_relaxes_to_union(hand_index):
    res = approx_knn(hand_index, [0.0], 3, v=3)
    assert res.fallback_level is FallbackLevel.UNION_ALL
    assert res.indices.tolist() == [1, 2, 3]
    assert res.candidates_examined == 4
    res = approx_knn(hand_index, [0.0], 1, v=3)
    assert res.fallback_level is FallbackLevel.NONE
    assert res.indices.tolist() == [2]


def test_hand_forest_falls_back_to_scan(hand_index):
    res = approx_knn(hand_index, [0.0], 5, v=1)
    assert res.fallback_level is FallbackLevel.EXHAUSTIVE
    assert res.indices.tolist() == [0, 1, 2, 3, 4]


@pytest.fixture(scope="module")
def small():
    data, _ = generate_synthetic(600, 12, 4, 0.8, 31)
    queries = np.random.default_rng(31).normal(size=(25, 12)) * 0.8
    return data, queries, build_index(data, 8, 6, 0.3, seed=4)


def test_union_and_intersection(small):
    data, queries, index = small
    for q in queries:
        per_tree = [set(query_leaf(t, q, 6).tolist()) for t in index.trees]
        assert set(candidates(index, q, v=1).tolist()) == set.union(*per_tree)
        assert set(candidates(index, q, v=8).tolist()) == set.intersection(*per_tree)


def test_vote_and_depth_monotonicity(small):
    _, queries, index = small
    for q in queries:
        prev = None
        for v in range(1, 9):
            cur = set(candidates(index, q, v=v).tolist())
            assert prev is None or cur <= prev
            prev = cur
        for v in (1, 3):
            prev = None
            for lv in range(0, 7):
                cur = set(candidates(index, q, v=v, l_use=lv).tolist())
                assert prev is None or cur <= prev
                prev = cur


def test_depth_zero_equals_exhaustive(small):
    data, queries, index = small
    flat = index.configured(depth=0)
    for q in queries:
        a = approx_knn(flat, q, 7)
        b = exhaustive_knn(data, q, 7)
        assert np.array_equal(a.indices, b.indices)
        assert np.array_equal(a.distances, b.distances)
        assert a.candidates_examined == 600


def _oracle(data, trees, q, k, v, l_use):
    votes = Counter()
    for t in trees:
        votes.update(query_leaf(t, q, l_use).tolist())
    level = "none"
    cur = v
    cand = [i for i, c in votes.items() if c >= cur]
    while len(cand) < k and cur > 1:
        cur -= 1
        cand = [i for i, c in votes.items() if c >= cur]
    if cur < v:
        level = "union_all" if cur == 1 else "vote_relaxed"
    if len(cand) < k:
        cand, level = list(range(len(data))), "exhaustive"
    dist = {i: float(sum((float(x) - float(y)) ** 2 for x, y in zip(data[i], q))) for i in cand}
    best = sorted(cand, key=lambda i: (dist[i], i))[:k]
    return best, level


def test_matches_independent_reimplementation():
    gen = np.random.default_rng(50)
    data = gen.normal(size=(50, 5)).astype(np.float32)
    index = build_index(data, 5, 2, 0.6, seed=50, vote_threshold=2)
    for q in gen.normal(size=(30, 5)):
        res = approx_knn(index, q, 3)
        want, level = _oracle(data, index.trees, q, 3, 2, 2)
        assert res.indices.tolist() == want
        assert res.fallback_level.value == level


@settings(max_examples=25)
@given(seed=st.integers(0, 2**32 - 1), v=st.integers(1, 6), k=st.integers(1, 12), depth=st.integers(1, 6))
def test_fallback_rule_matches_oracle(seed, v, k, depth):
    gen = np.random.default_rng(seed)
    data = gen.normal(size=(64, 4)).astype(np.float32)
    index = build_index(data, 6, depth, 0.5, seed=seed)
    for q in gen.normal(size=(4, 4)):
        res = approx_knn(index, q, k, v=v)
        want, level = _oracle(data, index.trees, q, k, v, depth)
        assert res.indices.tolist() == want
        assert res.fallback_level.value == level


def test_indexed_point_finds_itself(small):
    data, _, index = small
    for i in range(0, 600, 37):
        res = approx_knn(index.configured(vote_threshold=1), data[i], 1)
        assert res.indices[0] == i and res.distances[0] == 0.0


def test_argument_errors(small):
    data, queries, index = small
    with pytest.raises(ValueError):
        approx_knn(index, queries[0], 0)
    with pytest.raises(ValueError):
        approx_knn(index, queries[0], 601)
    with pytest.raises(ValueError):
        approx_knn(index, queries[0], 3, v=9)
    with pytest.raises(ValueError):
        approx_knn(index, queries[0][:5], 3)
    with pytest.raises(ValueError, match="maximum admissible depth is 9"):
        build_index(data, 2, 10)


def test_default_l_max():
    assert default_l_max(2000, 5) == 7
    assert default_l_max(20, 5) == 1


class TestAutotune:
    def test_full_recall_means_scan(self, blobs):
        data, _ = blobs
        index, result = autotune(data[:300], AutoTuneConfig(target_recall=1.0, k=5))
        assert result.exhaustive and not result.infeasible
        assert result.chosen == (1, 0, 1)
        q = data[1500]
        assert np.array_equal(index.knn(q, 5).indices, exhaustive_knn(data[:300], q, 5).indices)

    def test_grid_monotone_in_votes_trees_and_depth(self, blobs):
        data, _ = blobs
        _, result = autotune(data[:800], AutoTuneConfig(target_recall=0.9, k=5, T_max=8, l_max=5, seed=3))
        grid = {(g.T, g.l, g.v): g.recall for g in result.grid_report}
        assert len(grid) == sum(T for T in range(1, 9)) * 5
        for (T, lv, v), r in grid.items():
            if v > 1:
                assert r <= grid[(T, lv, v - 1)] + 1e-12
            if T > v:
                assert grid[(T - 1, lv, v)] <= r + 1e-12
            if lv > 1:
                assert r <= grid[(T, lv - 1, v)] + 1e-12

    def test_chosen_is_cheapest_feasible(self, blobs):
        data, _ = blobs
        index, result = autotune(data[:800], AutoTuneConfig(target_recall=0.8, k=5, T_max=8, l_max=5, seed=3))
        feasible = [g for g in result.grid_report if g.recall >= 0.8]
        assert feasible and not result.infeasible
        best = min(g.cost for g in feasible)
        assert result.estimated_cost == best
        T, lv, v = result.chosen
        assert (index.n_trees, index.depth_in_use, index.vote_threshold) == (T, lv, v)

    def test_unreachable_target_reports_best(self):
        # pure noise with a single shallow tree cannot reach 0.99
        data = np.random.default_rng(0).normal(size=(400, 30)).astype(np.float32)
        _, result = autotune(data, AutoTuneConfig(target_recall=0.99, k=5, T_max=1, l_max=4))
        assert result.infeasible
        assert result.estimated_recall == max(g.recall for g in result.grid_report)

    def test_tuned_recall_on_fresh_queries(self):
        data, _ = generate_synthetic(2200, 50, 10, 0.4, 77)
        train, fresh = data[:2000], data[2000:]
        index, result = autotune(train, AutoTuneConfig(target_recall=0.85, k=5, T_max=32, l_max=7, seed=1))
        hits = 0
        for q in fresh:
            hits += np.intersect1d(index.knn(q, 5).indices, exhaustive_knn(train, q, 5).indices).size
        assert hits / (5 * fresh.shape[0]) >= 0.80

    def test_rejects_bad_config(self):
        with pytest.raises(ValueError):
            AutoTuneConfig(target_recall=0.0)
        with pytest.raises(ValueError):
            AutoTuneConfig(target_recall=1.2)


class TestPersistence:
    def test_round_trip(self, small, tmp_path):
        data, queries, index = small
        index = index.configured(6, 5, 2)
        p = tmp_path / "f.anni"
        save_index(index, p)
        back = load_index(p, data)
        assert back.config() == index.config()
        for a, b in zip(index.trees, back.trees):
            assert np.array_equal(a.thresholds, b.thresholds)
            assert np.array_equal(a.level_weights, b.level_weights)
        for q in queries:
            assert np.array_equal(back.knn(q, 5).indices, index.knn(q, 5).indices)

    def test_tampered_byte(self, small, tmp_path):
        data, _, index = small
        p = tmp_path / "f.anni"
        save_index(index, p)
        buf = bytearray(p.read_bytes())
        buf[len(buf) // 2] ^= 0x01
        p.write_bytes(bytes(buf))
        with pytest.raises(IntegrityError):
            load_index(p, data)

    def test_other_data(self, small, tmp_path):
        data, _, index = small
        p = tmp_path / "f.anni"
        save_index(index, p)
        other = data.copy()
        other[0, 0] += 1.0
        with pytest.raises(IntegrityError):
            load_index(p, other)

    def test_truncated(self, small, tmp_path):
        data, _, index = small
        p = tmp_path / "f.anni"
        save_index(index, p)
        p.write_bytes(p.read_bytes()[:100])
        with pytest.raises(FormatError):
            load_index(p, data)


def test_thread_count_does_not_change_results(blobs):
    data, _ = blobs
    a = build_index(data, 12, 6, seed=9, threads=1)
    b = build_index(data, 12, 6, seed=9, threads=8)
    for x, y in zip(a.trees, b.trees):
        assert np.array_equal(x.order, y.order) and np.array_equal(x.thresholds, y.thresholds)
    qs = data[:40]
    ra = a.knn_batch(qs, 5, v=2, threads=1)
    rb = b.knn_batch(qs, 5, v=2, threads=8)
    assert all(np.array_equal(x.indices, y.indices) for x, y in zip(ra, rb))
    cfg = AutoTuneConfig(target_recall=0.85, k=5, T_max=10, l_max=6, seed=2)
    assert autotune(data, cfg, threads=1)[1].chosen == autotune(data, cfg, threads=8)[1].chosen
