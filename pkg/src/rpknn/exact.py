"""Exact k-nearest-neighbor search: linear scan and ball tree.

All searchers order neighbors by (distance, index), so ties resolve to the
lower point index.
"""
import enum
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .projection import RngStream


class FallbackLevel(str, enum.Enum):
    NONE = "none"
    VOTE_RELAXED = "vote_relaxed"
    UNION_ALL = "union_all"
    EXHAUSTIVE = "exhaustive"


@dataclass(frozen=True)
class QueryResult:
    indices: np.ndarray
    distances: np.ndarray
    candidates_examined: int
    fallback_level: FallbackLevel = FallbackLevel.NONE

    def __len__(self):
        return int(self.indices.shape[0])

    def same_neighbors(self, other) -> bool:
        return np.array_equal(self.indices, other.indices) and np.array_equal(self.distances, other.distances)


def as_query(q, d) -> np.ndarray:
    q = np.ascontiguousarray(q, dtype=np.float64)
    if q.ndim != 1 or q.shape[0] != d:
        raise ValueError(f"query has shape {q.shape}, expected ({d},)")
    return q


def exhaustive_knn(data, q, k, exclude=None) -> QueryResult:
    n, d = data.shape
    q = as_query(q, d)
    avail = n - (exclude is not None)
    if not 1 <= k <= avail:
        raise ValueError(f"k must be in [1, {avail}], got {k}")
    if exclude is None:
        cand = np.arange(n, dtype=np.int64)
    else:
        cand = np.delete(np.arange(n, dtype=np.int64), int(exclude))
    idx, sqd = _kernels.select_k(data, q, cand, k)
    return QueryResult(idx, np.sqrt(sqd), int(cand.shape[0]))


# -- ball tree ---------------------------------------------------------------

# relative slack on pruning bounds; covers rounding in dist(q, center)
_PRUNE_SLACK = 1e-9


@dataclass(frozen=True)
class BallTree:
    """Binary metric tree with explicit child pointers.

    Node ``i`` has ``centers[i]``, ``radii[i]`` and children ``left[i]``,
    ``right[i]`` (``-1`` for leaves). A leaf owns ``order[start[i]:end[i]]``.
    """

    data: np.ndarray
    centers: np.ndarray
    radii: np.ndarray
    left: np.ndarray
    right: np.ndarray
    start: np.ndarray
    end: np.ndarray
    order: np.ndarray
    leaf_capacity: int

    @property
    def n_nodes(self):
        return int(self.radii.shape[0])

    def is_leaf(self, i):
        return self.left[i] < 0

    def leaves(self):
        return [self.order[self.start[i]:self.end[i]] for i in range(self.n_nodes) if self.is_leaf(i)]


def build_ball_tree(data, leaf_capacity=40, seed=0) -> BallTree:
    """Recursive two-pivot ball tree.

    Pivots come from the farthest-point heuristic: a seeded random member
    ``x0``, then the member farthest from ``x0``, then the member farthest
    from that one. Points join the nearer pivot (ties to the first). Each
    node stores its centroid and the largest member distance from it.
    """
    if leaf_capacity < 1:
        raise ValueError(f"leaf_capacity must be >= 1, got {leaf_capacity}")
    n, d = data.shape
    gen = RngStream(seed, 0).generator
    centers, radii, left, right, start, end = [], [], [], [], [], []
    order = []

    def new_node(members):
        pts = data[members].astype(np.float64)
        center = pts.mean(axis=0)
        radius = float(np.sqrt(_kernels.sq_dists(data, members, center).max()))
        centers.append(center)
        radii.append(radius)
        left.append(-1)
        right.append(-1)
        start.append(-1)
        end.append(-1)
        return len(radii) - 1

    def make_leaf(node, members):
        start[node] = len(order)
        order.extend(members.tolist())
        end[node] = len(order)

    stack = [(np.arange(n, dtype=np.int64), None, None)]
    while stack:
        members, parent, side = stack.pop()
        node = new_node(members)
        if parent is not None:
            (left if side == 0 else right)[parent] = node
        if members.shape[0] <= leaf_capacity:
            make_leaf(node, members)
            continue
        x0 = members[gen.integers(members.shape[0])]
        p1 = members[np.argmax(_kernels.sq_dists(data, members, data[x0].astype(np.float64)))]
        d1 = _kernels.sq_dists(data, members, data[p1].astype(np.float64))
        p2 = members[np.argmax(d1)]
        d2 = _kernels.sq_dists(data, members, data[p2].astype(np.float64))
        to_first = d1 <= d2
        a, b = members[to_first], members[~to_first]
        if a.shape[0] == 0 or b.shape[0] == 0:
            make_leaf(node, members)
            continue
        # right pushed first so the left subtree is numbered first
        stack.append((b, node, 1))
        stack.append((a, node, 0))

    return BallTree(
        data=data,
        centers=np.array(centers),
        radii=np.array(radii),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        start=np.array(start, dtype=np.int64),
        end=np.array(end, dtype=np.int64),
        order=np.array(order, dtype=np.int64),
        leaf_capacity=leaf_capacity,
    )


def _center_dist(tree, i, q):
    diff = tree.centers[i] - q
    return float(np.sqrt(diff @ diff))


def ball_tree_knn(tree: BallTree, q, k) -> QueryResult:
    """Exact kNN by branch and bound.

    A subtree is skipped only when ``dist(q, center) - radius`` strictly
    exceeds the current k-th best distance, so tied points are never lost and
    the result matches :func:`exhaustive_knn` exactly.
    """
    data = tree.data
    n, d = data.shape
    q = as_query(q, d)
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    best_idx = np.empty(0, dtype=np.int64)
    best_sqd = np.empty(0, dtype=np.float64)
    kth = np.inf
    examined = 0

    stack = [(_center_dist(tree, 0, q) - tree.radii[0], 0)]
    while stack:
        bound, i = stack.pop()
        if bound > kth + _PRUNE_SLACK * (1.0 + kth):
            continue
        if tree.is_leaf(i):
            pts = tree.order[tree.start[i]:tree.end[i]]
            sqd = _kernels.sq_dists(data, pts, q)
            examined += pts.shape[0]
            idx = np.concatenate([best_idx, pts])
            dd = np.concatenate([best_sqd, sqd])
            keep = np.lexsort((idx, dd))[:k]
            best_idx, best_sqd = idx[keep], dd[keep]
            if best_idx.shape[0] == k:
                kth = float(np.sqrt(best_sqd[-1]))
            continue
        a, b = int(tree.left[i]), int(tree.right[i])
        da, db = _center_dist(tree, a, q), _center_dist(tree, b, q)
        near, far = ((a, da), (b, db)) if da <= db else ((b, db), (a, da))
        # pushed last, popped first
        stack.append((far[1] - tree.radii[far[0]], far[0]))
        stack.append((near[1] - tree.radii[near[0]], near[0]))
    return QueryResult(best_idx, np.sqrt(best_sqd), examined)
