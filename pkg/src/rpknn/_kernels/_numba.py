"""Numba implementations of the hot loops.

Every kernel accumulates in float64, left to right, so results are
bit-identical to the numpy fallback in ``_numpy.py``.
"""
import numpy as np
from numba import njit

_FNV_OFFSET = np.uint64(0xCBF29CE484222325)
_FNV_PRIME = np.uint64(0x100000001B3)


@njit(nogil=True, cache=True)
def sq_dists(data, rows, q):
    d = data.shape[1]
    out = np.empty(rows.shape[0], dtype=np.float64)
    for i in range(rows.shape[0]):
        r = rows[i]
        s = 0.0
        for j in range(d):
            t = np.float64(data[r, j]) - q[j]
            s += t * t
        out[i] = s
    return out


@njit(nogil=True, cache=True)
def sq_dists_all(data, q):
    n, d = data.shape
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        s = 0.0
        for j in range(d):
            t = np.float64(data[i, j]) - q[j]
            s += t * t
        out[i] = s
    return out


@njit(nogil=True, cache=True)
def project_point(q, idx, w):
    s = 0.0
    for j in range(idx.shape[0]):
        s += w[j] * q[idx[j]]
    return s


@njit(nogil=True, cache=True)
def project_all(data, idx, w):
    n = data.shape[0]
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        s = 0.0
        for j in range(idx.shape[0]):
            s += w[j] * np.float64(data[i, idx[j]])
        out[i] = s
    return out


@njit(nogil=True, cache=True)
def build_tree(data, level_idx, level_w):
    n = data.shape[0]
    depth = level_idx.shape[0]
    order = np.arange(n).astype(np.int64)
    thresholds = np.empty((1 << depth) - 1, dtype=np.float64)
    offs = np.zeros(2, dtype=np.int64)
    offs[1] = n
    for s in range(depth):
        proj = project_all(data, level_idx[s], level_w[s])
        nodes = 1 << s
        new_offs = np.empty(2 * nodes + 1, dtype=np.int64)
        new_offs[0] = 0
        for j in range(nodes):
            lo = offs[j]
            hi = offs[j + 1]
            m = hi - lo
            seg = np.sort(order[lo:hi])
            p = np.empty(m, dtype=np.float64)
            for i in range(m):
                p[i] = proj[seg[i]]
            perm = np.argsort(p, kind="mergesort")
            for i in range(m):
                order[lo + i] = seg[perm[i]]
            n_left = (m + 1) // 2
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


@njit(nogil=True, cache=True)
def descend(q, level_idx, level_w, thresholds, stop_depth):
    node = 0
    for s in range(stop_depth):
        if project_point(q, level_idx[s], level_w[s]) < thresholds[node]:
            node = 2 * node + 1
        else:
            node = 2 * node + 2
    return node


@njit(nogil=True, cache=True)
def vote_counts(q, f_idx, f_w, f_thr, f_order, f_offs, l_use):
    n_trees = f_idx.shape[0]
    depth = f_idx.shape[1]
    n = f_order.shape[1]
    counts = np.zeros(n, dtype=np.int32)
    nt = 0
    shift = depth - l_use
    first = (1 << l_use) - 1
    for t in range(n_trees):
        node = descend(q, f_idx[t], f_w[t], f_thr[t], l_use)
        j = node - first
        lo = f_offs[t, j << shift]
        hi = f_offs[t, (j + 1) << shift]
        for pos in range(lo, hi):
            pt = f_order[t, pos]
            if counts[pt] == 0:
                nt += 1
            counts[pt] += 1
    # a linear scan yields ascending order without sorting
    pts = np.empty(nt, dtype=np.int64)
    out = np.empty(nt, dtype=np.int32)
    c = 0
    for i in range(n):
        if counts[i] > 0:
            pts[c] = i
            out[c] = counts[i]
            c += 1
    return pts, out


@njit(nogil=True, cache=True)
def select_k(data, q, cand, k):
    sqd = sq_dists(data, cand, q)
    m = cand.shape[0]
    if k < m:
        kth = np.partition(sqd, k - 1)[k - 1]
        keep = 0
        for i in range(m):
            if sqd[i] <= kth:
                keep += 1
        sel = np.empty(keep, dtype=np.int64)
        sd = np.empty(keep, dtype=np.float64)
        c = 0
        for i in range(m):
            if sqd[i] <= kth:
                sel[c] = cand[i]
                sd[c] = sqd[i]
                c += 1
    else:
        sel = cand.copy()
        sd = sqd
    # index order first so equal distances resolve to the lower index
    by_idx = np.argsort(sel, kind="mergesort")
    sel = sel[by_idx]
    sd = sd[by_idx]
    perm = np.argsort(sd, kind="mergesort")[:k]
    return sel[perm], sd[perm]


@njit(nogil=True, cache=True)
def tune_stats(data, qrows, gt, f_idx, f_w, f_thr, f_order, f_offs):
    n_trees = f_idx.shape[0]
    depth = f_idx.shape[1]
    n = f_order.shape[1]
    k = gt.shape[1]
    recall_sum = np.zeros((depth + 1, n_trees + 1, n_trees + 1))
    size_sum = np.zeros((depth + 1, n_trees + 1, n_trees + 1))
    counts = np.zeros(n, dtype=np.int32)
    touched = np.empty(n, dtype=np.int64)
    hist = np.zeros(n_trees + 2, dtype=np.int64)
    paths = np.empty((n_trees, depth + 1), dtype=np.int64)
    for qi in range(qrows.shape[0]):
        own = qrows[qi]
        q = data[own].astype(np.float64)
        for t in range(n_trees):
            node = 0
            paths[t, 0] = 0
            for s in range(depth):
                if project_point(q, f_idx[t, s], f_w[t, s]) < f_thr[t, node]:
                    node = 2 * node + 1
                else:
                    node = 2 * node + 2
                paths[t, s + 1] = node
        for lv in range(1, depth + 1):
            nt = 0
            hist[:] = 0
            shift = depth - lv
            first = (1 << lv) - 1
            for t in range(n_trees):
                j = paths[t, lv] - first
                lo = f_offs[t, j << shift]
                hi = f_offs[t, (j + 1) << shift]
                for pos in range(lo, hi):
                    pt = f_order[t, pos]
                    if pt == own:
                        continue
                    c = counts[pt]
                    if c == 0:
                        touched[nt] = pt
                        nt += 1
                    else:
                        hist[c] -= 1
                    counts[pt] = c + 1
                    hist[c + 1] += 1
                used = t + 1
                acc = 0
                for v in range(used, 0, -1):
                    acc += hist[v]
                    size_sum[lv, used, v] += acc
                for g in range(k):
                    c = counts[gt[qi, g]]
                    for v in range(1, c + 1):
                        recall_sum[lv, used, v] += 1.0
            for i in range(nt):
                counts[touched[i]] = 0
    return recall_sum, size_sum


@njit(nogil=True, cache=True)
def fnv1a64(buf):
    h = _FNV_OFFSET
    for i in range(buf.shape[0]):
        h ^= np.uint64(buf[i])
        h *= _FNV_PRIME
    return h
