"""Median-split sparse random-projection trees.

A tree of depth ``l`` uses one sparse direction per level, shared by every
node on that level. It is stored flat:

* ``thresholds`` holds the ``2**l - 1`` split values in heap order (children
  of node ``i`` are ``2i+1`` and ``2i+2``);
* ``order`` is a permutation of the point indices in which every leaf, and
  hence every subtree, is a contiguous slice;
* ``leaf_offsets`` (length ``2**l + 1``) delimits the leaves in ``order``.

Because subtrees are contiguous, stopping a query at a shallower depth is a
slice over several adjacent leaves.
"""
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .projection import RngStream, SparseVector, sample_sparse_vector


def max_depth(n: int) -> int:
    """Largest ``l`` with ``2**l <= n``."""
    return int(n).bit_length() - 1


def check_depth(depth: int, n: int):
    if depth < 0:
        raise ValueError(f"depth must be >= 0, got {depth}")
    if depth > max_depth(n):
        raise ValueError(
            f"depth {depth} needs at least {2**depth} points but only {n} are indexed; "
            f"maximum admissible depth is {max_depth(n)}"
        )


@dataclass(frozen=True)
class RPTree:
    depth: int
    level_indices: np.ndarray  # (depth, nnz) int64
    level_weights: np.ndarray  # (depth, nnz) float64
    thresholds: np.ndarray
    order: np.ndarray
    leaf_offsets: np.ndarray
    n: int
    d: int

    @property
    def level_vectors(self):
        return [SparseVector(self.d, i, w) for i, w in zip(self.level_indices, self.level_weights)]

    @property
    def leaf_buckets(self):
        offs = self.leaf_offsets
        return [self.order[offs[j]:offs[j + 1]] for j in range(len(offs) - 1)]

    def descend(self, q, stop_depth):
        return int(_kernels.descend(q, self.level_indices, self.level_weights, self.thresholds, stop_depth))

    def subtree_slice(self, node, level):
        j = node - ((1 << level) - 1)
        shift = self.depth - level
        return int(self.leaf_offsets[j << shift]), int(self.leaf_offsets[(j + 1) << shift])


def build_tree(data, depth: int, sparsity_a: float, rng: RngStream) -> RPTree:
    """Build one tree over the rows of ``data``.

    At every node the points are ordered by projection (ties by index); the
    first ``ceil(m/2)`` go left and the threshold is the midpoint of the gap
    between the two halves.
    """
    n, d = data.shape
    check_depth(depth, n)
    vectors = [sample_sparse_vector(d, sparsity_a, rng) for _ in range(depth)]
    nnz = vectors[0].nnz if vectors else 1
    level_idx = np.zeros((depth, nnz), dtype=np.int64)
    level_w = np.zeros((depth, nnz), dtype=np.float64)
    for s, v in enumerate(vectors):
        level_idx[s] = v.indices
        level_w[s] = v.weights
    order, thresholds, offs = _kernels.build_tree(data, level_idx, level_w)
    return RPTree(depth, level_idx, level_w, thresholds, order, offs, n, d)


def query_leaf(tree: RPTree, q, stop_depth=None) -> np.ndarray:
    """Indices under the node reached after ``stop_depth`` routing steps.

    A query goes left when its projection is strictly below the node
    threshold. ``stop_depth`` defaults to the full depth (a single leaf).
    """
    if stop_depth is None:
        stop_depth = tree.depth
    if not 0 <= stop_depth <= tree.depth:
        raise ValueError(f"stop_depth must be in [0, {tree.depth}], got {stop_depth}")
    q = np.ascontiguousarray(q, dtype=np.float64)
    if q.ndim != 1 or q.shape[0] != tree.d:
        raise ValueError(f"query has shape {q.shape}, expected ({tree.d},)")
    node = tree.descend(q, stop_depth)
    lo, hi = tree.subtree_slice(node, stop_depth)
    return tree.order[lo:hi]
