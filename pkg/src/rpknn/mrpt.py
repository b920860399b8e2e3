"""Forests of sparse RP trees with vote-based candidate selection.

A query descends every tree to depth ``depth_in_use``. A point becomes a
candidate when it sits in at least ``v`` of the reached nodes; candidates are
then ranked by exact Euclidean distance.

The auto-tuner builds one forest at ``(T_max, l_max)`` and scores every
``(T, l, v)`` from it: the first ``T`` trees, traversal truncated at depth
``l``. That is exact because every node on a level shares one direction.
"""
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from ._parallel import pmap
from .errors import FormatError, IntegrityError
from .exact import FallbackLevel, QueryResult, as_query, exhaustive_knn
from .projection import RngStream, default_sparsity
from .rptree import RPTree, build_tree, check_depth, max_depth

ANNI_MAGIC = b"ANNI"
FORMAT_VERSION = 1
# stream id reserved for drawing validation queries; tree t uses stream t
_VALIDATION_STREAM = 2**63


def data_checksum(data) -> int:
    """FNV-1a 64 over the little-endian float32 payload of ``data``."""
    buf = np.ascontiguousarray(data, dtype="<f4").view(np.uint8).reshape(-1)
    return int(_kernels.fnv1a64(buf))


def default_depth(n, k):
    """Untuned depth: leaves of roughly ``max(4k, 100)`` points, at least 1."""
    leaf = max(4 * k, 100)
    depth = int(math.floor(math.log2(n / leaf))) if n >= leaf else 0
    return min(max(depth, 1), max_depth(n))


class MRPTIndex:
    """A forest of RP trees over one data matrix plus its query settings."""

    def __init__(self, data, trees, seed, vote_threshold=1, depth_in_use=None, sparsity_a=None):
        if not trees:
            raise ValueError("index needs at least one tree")
        depths = {t.depth for t in trees}
        if len(depths) != 1:
            raise ValueError(f"trees have mixed depths {sorted(depths)}")
        n, d = data.shape
        if any(t.n != n or t.d != d for t in trees):
            raise ValueError("trees were built on a different data shape")
        self.data = data
        self.trees = list(trees)
        self.seed = int(seed)
        self.sparsity_a = sparsity_a
        built = depths.pop()
        self.depth_in_use = built if depth_in_use is None else int(depth_in_use)
        self.vote_threshold = int(vote_threshold)
        if not 0 <= self.depth_in_use <= built:
            raise ValueError(f"depth_in_use must be in [0, {built}], got {self.depth_in_use}")
        if not 1 <= self.vote_threshold <= len(self.trees):
            raise ValueError(f"vote threshold must be in [1, {len(self.trees)}], got {self.vote_threshold}")

        self._idx = np.stack([t.level_indices for t in trees])
        self._w = np.stack([t.level_weights for t in trees])
        self._thr = np.stack([t.thresholds for t in trees])
        self._order = np.stack([t.order for t in trees])
        self._offs = np.stack([t.leaf_offsets for t in trees])

    @property
    def n_trees(self):
        return len(self.trees)

    @property
    def built_depth(self):
        return self.trees[0].depth

    @property
    def nnz(self):
        return int(self._idx.shape[2]) if self.built_depth else 0

    @property
    def exhaustive(self):
        return self.depth_in_use == 0

    def configured(self, n_trees=None, depth=None, vote_threshold=None):
        """A view using the first ``n_trees`` trees and other query settings."""
        n_trees = self.n_trees if n_trees is None else n_trees
        return MRPTIndex(
            self.data,
            self.trees[:n_trees],
            self.seed,
            vote_threshold=self.vote_threshold if vote_threshold is None else vote_threshold,
            depth_in_use=self.depth_in_use if depth is None else depth,
            sparsity_a=self.sparsity_a,
        )

    def config(self):
        return {
            "trees": self.n_trees,
            "depth": self.depth_in_use,
            "built_depth": self.built_depth,
            "votes": self.vote_threshold,
            "sparsity": self.sparsity_a,
            "seed": self.seed,
        }

    def _votes(self, q, l_use):
        return _kernels.vote_counts(q, self._idx, self._w, self._thr, self._order, self._offs, l_use)

    def knn(self, q, k, v=None):
        return approx_knn(self, q, k, v)

    def knn_batch(self, queries, k, v=None, threads=None):
        queries = np.asarray(queries)
        return pmap(lambda i: approx_knn(self, queries[i], k, v), range(queries.shape[0]), threads)


def build_index(data, n_trees, depth, sparsity_a=None, seed=0, vote_threshold=1, threads=None) -> MRPTIndex:
    """Build ``n_trees`` trees; tree ``t`` draws from ``RngStream(seed, t)``."""
    n, d = data.shape
    if n_trees < 1:
        raise ValueError(f"number of trees must be >= 1, got {n_trees}")
    check_depth(depth, n)
    if sparsity_a is None:
        sparsity_a = default_sparsity(d)
    trees = pmap(lambda t: build_tree(data, depth, sparsity_a, RngStream(seed, t)), range(n_trees), threads)
    return MRPTIndex(data, trees, seed, vote_threshold=vote_threshold, sparsity_a=sparsity_a)


def _check_v_l(index, v, l_use):
    if not 1 <= v <= index.n_trees:
        raise ValueError(f"vote threshold must be in [1, {index.n_trees}], got {v}")
    if not 0 <= l_use <= index.built_depth:
        raise ValueError(f"depth must be in [0, {index.built_depth}], got {l_use}")


def candidates(index: MRPTIndex, q, v=None, l_use=None) -> np.ndarray:
    """Points found in at least ``v`` of the trees' reached nodes, ascending."""
    v = index.vote_threshold if v is None else v
    l_use = index.depth_in_use if l_use is None else l_use
    _check_v_l(index, v, l_use)
    q = as_query(q, index.data.shape[1])
    if l_use == 0:
        return np.arange(index.data.shape[0], dtype=np.int64)
    pts, counts = index._votes(q, l_use)
    return pts[counts >= v]


def approx_knn(index: MRPTIndex, q, k, v=None) -> QueryResult:
    """Approximate k nearest neighbors with exact re-ranking.

    If fewer than ``k`` points pass the vote, the threshold is lowered one
    step at a time (``vote_relaxed``; ``union_all`` once it reaches 1). If
    even the union is short, all points are scanned (``exhaustive``).
    """
    data = index.data
    n, d = data.shape
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    v = index.vote_threshold if v is None else v
    l_use = index.depth_in_use
    _check_v_l(index, v, l_use)
    q = as_query(q, d)

    level = FallbackLevel.NONE
    if l_use == 0:
        cand = np.arange(n, dtype=np.int64)
    else:
        pts, counts = index._votes(q, l_use)
        cur = v
        cand = pts[counts >= cur]
        while cand.shape[0] < k and cur > 1:
            cur -= 1
            cand = pts[counts >= cur]
        if cur < v:
            level = FallbackLevel.UNION_ALL if cur == 1 else FallbackLevel.VOTE_RELAXED
        if cand.shape[0] < k:
            cand = np.arange(n, dtype=np.int64)
            level = FallbackLevel.EXHAUSTIVE
    idx, sqd = _kernels.select_k(data, q, cand, k)
    return QueryResult(idx, np.sqrt(sqd), int(cand.shape[0]), level)


# -- auto-tuning -------------------------------------------------------------


@dataclass(frozen=True)
class AutoTuneConfig:
    target_recall: float = 0.85
    k: int = 5
    T_max: int = 32
    l_max: int | None = None  # None: deepest level with leaves of >= 2k points
    validation_queries: int = 200
    sparsity_a: float | None = None
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.target_recall <= 1.0:
            raise ValueError(f"target recall must be in (0, 1], got {self.target_recall}")
        if self.k < 1 or self.T_max < 1 or self.validation_queries < 1:
            raise ValueError("k, T_max and validation_queries must all be >= 1")
        if self.l_max is not None and self.l_max < 1:
            raise ValueError(f"l_max must be >= 1, got {self.l_max}")


@dataclass(frozen=True)
class GridPoint:
    T: int
    l: int
    v: int
    recall: float
    cost: float


@dataclass
class AutoTuneResult:
    chosen: tuple
    estimated_recall: float
    estimated_cost: float
    grid_report: list = field(default_factory=list)
    infeasible: bool = False
    exhaustive: bool = False

    def to_dict(self):
        out = asdict(self)
        out["chosen"] = {"T": self.chosen[0], "l": self.chosen[1], "v": self.chosen[2]}
        return out


def default_l_max(n, k):
    """Deepest level whose nodes still hold about ``2k`` points."""
    return max(1, min(int(math.floor(math.log2(max(n / (2 * k), 1.0)))), max_depth(n)))


def tuning_grid(index: MRPTIndex, qrows, gt):
    """Mean recall and mean candidate count for every ``(T, l, v)``.

    Returns two arrays indexed ``[l, T, v]``. The validation point itself is
    never counted, as a stand-in for a fresh query.
    """
    recall_sum, size_sum = _kernels.tune_stats(
        index.data, qrows, gt, index._idx, index._w, index._thr, index._order, index._offs
    )
    m, k = gt.shape
    return recall_sum / (m * k), size_sum / m


def autotune(data, config: AutoTuneConfig, threads=None):
    """Pick the cheapest ``(T, l, v)`` whose estimated recall meets the target.

    Cost per query is ``mean|C| * d + T * l * nnz``: distance work over the
    candidates plus sparse projection work. A target of 1.0 yields an index
    that scans every point. When no triple reaches the target the best-recall
    triple is returned with ``infeasible=True``.
    """
    n, d = data.shape
    k = config.k
    if k > n - 1:
        raise ValueError(f"k={k} needs at least {k + 1} indexed points")
    sparsity = config.sparsity_a if config.sparsity_a is not None else default_sparsity(d)

    if config.target_recall >= 1.0:
        index = build_index(data, 1, 0, sparsity, config.seed)
        result = AutoTuneResult((1, 0, 1), 1.0, float(n * d), [], infeasible=False, exhaustive=True)
        return index, result

    l_max = config.l_max if config.l_max is not None else default_l_max(n, k)
    check_depth(l_max, n)
    m = min(config.validation_queries, n)

    forest = build_index(data, config.T_max, l_max, sparsity, config.seed, threads=threads)
    gen = RngStream(config.seed, _VALIDATION_STREAM).generator
    qrows = np.sort(gen.choice(n, size=m, replace=False)).astype(np.int64)
    truth = pmap(lambda i: exhaustive_knn(data, data[i], k, exclude=i).indices, qrows, threads)
    gt = np.stack(truth).astype(np.int64)

    recall, size = tuning_grid(forest, qrows, gt)
    nnz = forest.nnz
    grid = []
    for T in range(1, config.T_max + 1):
        for lv in range(1, l_max + 1):
            for v in range(1, T + 1):
                cost = float(size[lv, T, v] * d + T * lv * nnz)
                grid.append(GridPoint(T, lv, v, float(recall[lv, T, v]), cost))

    feasible = [g for g in grid if g.recall >= config.target_recall]
    if feasible:
        best = min(feasible, key=lambda g: (g.cost, g.T, g.l, -g.v))
        infeasible = False
    else:
        best = min(grid, key=lambda g: (-g.recall, g.cost, g.T, g.l, -g.v))
        infeasible = True
    index = forest.configured(best.T, best.l, best.v)
    result = AutoTuneResult((best.T, best.l, best.v), best.recall, best.cost, grid, infeasible=infeasible)
    return index, result


# -- ANNI format -------------------------------------------------------------
#
# "ANNI", u32 version, u64 seed, T, l, d, n, data checksum; per tree: l sparse
# vectors (u64 nnz, u64 indices[nnz], f64 weights[nnz]), 2^l - 1 f64
# thresholds, 2^l buckets (u64 count, u64 indices[count]). A trailer follows:
# u64 vote threshold, u64 depth in use, f64 sparsity, then FNV-1a 64 of all
# preceding bytes.

_HEAD = struct.Struct("<4sIQQQQQQ")
_TRAIL = struct.Struct("<QQd")


def _index_bytes(index: MRPTIndex) -> bytes:
    n, d = index.data.shape
    depth = index.built_depth
    parts = [
        _HEAD.pack(ANNI_MAGIC, FORMAT_VERSION, index.seed, index.n_trees, depth, d, n, data_checksum(index.data))
    ]
    for tree in index.trees:
        for s in range(depth):
            idx = tree.level_indices[s]
            parts.append(struct.pack("<Q", idx.shape[0]))
            parts.append(idx.astype("<u8").tobytes())
            parts.append(tree.level_weights[s].astype("<f8").tobytes())
        parts.append(tree.thresholds.astype("<f8").tobytes())
        for bucket in tree.leaf_buckets:
            parts.append(struct.pack("<Q", bucket.shape[0]))
            parts.append(bucket.astype("<u8").tobytes())
    sparsity = index.sparsity_a if index.sparsity_a is not None else float("nan")
    parts.append(_TRAIL.pack(index.vote_threshold, index.depth_in_use, sparsity))
    return b"".join(parts)


def save_index(index: MRPTIndex, path):
    body = _index_bytes(index)
    checksum = int(_kernels.fnv1a64(np.frombuffer(body, dtype=np.uint8)))
    Path(path).write_bytes(body + struct.pack("<Q", checksum))


class _Reader:
    def __init__(self, buf, path):
        self.buf, self.pos, self.path = buf, 0, path

    def take(self, nbytes):
        if self.pos + nbytes > len(self.buf):
            raise FormatError(f"{self.path}: truncated index file")
        out = self.buf[self.pos:self.pos + nbytes]
        self.pos += nbytes
        return out

    def u64(self):
        return struct.unpack("<Q", self.take(8))[0]

    def array(self, dtype, count):
        dt = np.dtype(dtype)
        return np.frombuffer(self.take(dt.itemsize * count), dtype=dt)


def load_index(path, data) -> MRPTIndex:
    """Load an index written by :func:`save_index` against its data matrix.

    Raises :class:`IntegrityError` when the file has been modified or when
    ``data`` is not the matrix the index was built on.
    """
    path = Path(path)
    buf = path.read_bytes()
    if len(buf) < _HEAD.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, seed, n_trees, depth, d, n, checksum = _HEAD.unpack_from(buf)
    if magic != ANNI_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {ANNI_MAGIC!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if len(buf) < _HEAD.size + 8:
        raise FormatError(f"{path}: truncated index file")
    body, (stored,) = buf[:-8], struct.unpack("<Q", buf[-8:])
    if int(_kernels.fnv1a64(np.frombuffer(body, dtype=np.uint8))) != stored:
        raise IntegrityError(f"{path}: index checksum mismatch (file corrupted or modified)")
    if data.shape != (n, d):
        raise IntegrityError(f"{path}: index built on {n}x{d} data, got {data.shape[0]}x{data.shape[1]}")
    if data_checksum(data) != checksum:
        raise IntegrityError(f"{path}: data checksum mismatch; index was built on a different matrix")

    r = _Reader(body, path)
    r.pos = _HEAD.size
    trees = []
    for _ in range(n_trees):
        idx_rows, w_rows = [], []
        for _ in range(depth):
            nnz = r.u64()
            idx_rows.append(r.array("<u8", nnz).astype(np.int64))
            w_rows.append(r.array("<f8", nnz).astype(np.float64))
        if depth:
            level_idx, level_w = np.stack(idx_rows), np.stack(w_rows)
        else:
            level_idx, level_w = np.zeros((0, 1), np.int64), np.zeros((0, 1), np.float64)
        thresholds = r.array("<f8", (1 << depth) - 1).astype(np.float64)
        buckets = []
        for _ in range(1 << depth):
            cnt = r.u64()
            buckets.append(r.array("<u8", cnt).astype(np.int64))
        order = np.concatenate(buckets)
        offs = np.concatenate([[0], np.cumsum([b.shape[0] for b in buckets])]).astype(np.int64)
        if order.shape[0] != n or not np.array_equal(np.sort(order), np.arange(n)):
            raise FormatError(f"{path}: leaf buckets do not partition the {n} points")
        trees.append(RPTree(depth, level_idx, level_w, thresholds, order, offs, n, d))
    votes, l_use, sparsity = struct.unpack(_TRAIL.format, r.take(_TRAIL.size))
    if r.pos != len(body):
        raise FormatError(f"{path}: {len(body) - r.pos} unexpected trailing bytes")
    return MRPTIndex(
        data, trees, seed, vote_threshold=votes, depth_in_use=l_use,
        sparsity_a=None if math.isnan(sparsity) else sparsity,
    )
