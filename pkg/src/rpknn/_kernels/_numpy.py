"""Pure-numpy fallback for the kernels in ``_numba.py``.

Row sums go through ``np.cumsum`` rather than ``np.sum``: accumulate is
strictly sequential, whereas ``sum`` uses pairwise summation and would drift
from the compiled path in the last bits.
"""
import numpy as np

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

# rows per chunk when materialising (rows, d) float64 temporaries
_CHUNK = 1024


def _seq_rowsum(a):
    if a.shape[1] == 0:
        return np.zeros(a.shape[0])
    return np.cumsum(a, axis=1)[:, -1]


def sq_dists(data, rows, q):
    out = np.empty(rows.shape[0], dtype=np.float64)
    for lo in range(0, rows.shape[0], _CHUNK):
        block = data[rows[lo:lo + _CHUNK]].astype(np.float64) - q
        out[lo:lo + _CHUNK] = _seq_rowsum(block * block)
    return out


def sq_dists_all(data, q):
    out = np.empty(data.shape[0], dtype=np.float64)
    for lo in range(0, data.shape[0], _CHUNK):
        block = data[lo:lo + _CHUNK].astype(np.float64) - q
        out[lo:lo + _CHUNK] = _seq_rowsum(block * block)
    return out


def project_point(q, idx, w):
    return float(np.cumsum(w * q[idx])[-1])


def project_all(data, idx, w):
    return _seq_rowsum(w * data[:, idx].astype(np.float64))


def build_tree(data, level_idx, level_w):
    n = data.shape[0]
    depth = level_idx.shape[0]
    order = np.arange(n, dtype=np.int64)
    thresholds = np.empty((1 << depth) - 1, dtype=np.float64)
    offs = np.array([0, n], dtype=np.int64)
    for s in range(depth):
        proj = project_all(data, level_idx[s], level_w[s])
        nodes = 1 << s
        new_offs = np.empty(2 * nodes + 1, dtype=np.int64)
        new_offs[0] = 0
        for j in range(nodes):
            lo, hi = offs[j], offs[j + 1]
            seg = np.sort(order[lo:hi])
            p = proj[seg]
            perm = np.argsort(p, kind="stable")
            order[lo:hi] = seg[perm]
            n_left = (hi - lo + 1) // 2
            left_max = p[perm[n_left - 1]]
            right_min = p[perm[n_left]]
            thr = 0.5 * (left_max + right_min)
            if not left_max < thr:
                thr = right_min
            thresholds[nodes - 1 + j] = thr
            new_offs[2 * j + 1] = lo + n_left
            new_offs[2 * j + 2] = hi
        offs = new_offs
    return order, thresholds, offs


def descend(q, level_idx, level_w, thresholds, stop_depth):
    node = 0
    for s in range(stop_depth):
        if project_point(q, level_idx[s], level_w[s]) < thresholds[node]:
            node = 2 * node + 1
        else:
            node = 2 * node + 2
    return node


def _leaf_slice(offs, node, level, depth):
    j = node - ((1 << level) - 1)
    shift = depth - level
    return offs[j << shift], offs[(j + 1) << shift]


def vote_counts(q, f_idx, f_w, f_thr, f_order, f_offs, l_use):
    n_trees, depth = f_idx.shape[0], f_idx.shape[1]
    n = f_order.shape[1]
    counts = np.zeros(n, dtype=np.int32)
    for t in range(n_trees):
        node = descend(q, f_idx[t], f_w[t], f_thr[t], l_use)
        lo, hi = _leaf_slice(f_offs[t], node, l_use, depth)
        counts[f_order[t, lo:hi]] += 1
    pts = np.flatnonzero(counts).astype(np.int64)
    return pts, counts[pts]


def select_k(data, q, cand, k):
    sqd = sq_dists(data, cand, q)
    if k < cand.shape[0]:
        kth = np.partition(sqd, k - 1)[k - 1]
        keep = sqd <= kth
        cand, sqd = cand[keep], sqd[keep]
    perm = np.lexsort((cand, sqd))[:k]
    return cand[perm], sqd[perm]


def tune_stats(data, qrows, gt, f_idx, f_w, f_thr, f_order, f_offs):
    n_trees, depth = f_idx.shape[0], f_idx.shape[1]
    n = f_order.shape[1]
    recall_sum = np.zeros((depth + 1, n_trees + 1, n_trees + 1))
    size_sum = np.zeros((depth + 1, n_trees + 1, n_trees + 1))
    member = np.zeros((n_trees, n), dtype=np.int32)
    vs = np.arange(1, n_trees + 1)
    for qi, own in enumerate(qrows):
        q = data[own].astype(np.float64)
        paths = np.empty((n_trees, depth + 1), dtype=np.int64)
        for t in range(n_trees):
            for s in range(depth + 1):
                paths[t, s] = descend(q, f_idx[t], f_w[t], f_thr[t], s)
        for lv in range(1, depth + 1):
            member[:] = 0
            for t in range(n_trees):
                lo, hi = _leaf_slice(f_offs[t], paths[t, lv], lv, depth)
                member[t, f_order[t, lo:hi]] = 1
            member[:, own] = 0
            cum = np.cumsum(member, axis=0)
            for used in range(1, n_trees + 1):
                row = cum[used - 1]
                hist = np.bincount(row, minlength=n_trees + 1)
                at_least = np.cumsum(hist[::-1])[::-1]
                size_sum[lv, used, 1:used + 1] += at_least[1:used + 1]
                tc = row[gt[qi]]
                recall_sum[lv, used, 1:used + 1] += (tc[:, None] >= vs[None, :used]).sum(axis=0)
    return recall_sum, size_sum


def fnv1a64(buf):
    h = _FNV_OFFSET
    for b in bytes(buf):
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return np.uint64(h)
