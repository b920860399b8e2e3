"""Time the numba kernels against the pure-numpy fallback.

    python benchmarks/bench_kernels.py [--n 20000] [--d 500] [--trees 32] [--depth 7]

Both backends return identical results; this only compares speed.
"""
import argparse
import time

import numpy as np

from rpknn._kernels import _numba, _numpy
from rpknn.exact import exhaustive_knn
from rpknn.projection import RngStream, default_sparsity, nnz_for, sample_sparse_vector


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def levels(d, depth, seed):
    a = default_sparsity(d)
    idx = np.zeros((depth, nnz_for(d, a)), dtype=np.int64)
    w = np.zeros(idx.shape)
    rng = RngStream(seed)
    for s in range(depth):
        v = sample_sparse_vector(d, a, rng)
        idx[s], w[s] = v.indices, v.weights
    return idx, w


def forest(impl, data, trees, depth):
    parts = []
    for t in range(trees):
        idx, w = levels(data.shape[1], depth, t)
        order, thr, offs = impl.build_tree(data, idx, w)
        parts.append((idx, w, thr, order, offs))
    return [np.stack(p) for p in zip(*parts)]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=20000)
    ap.add_argument("--d", type=int, default=500)
    ap.add_argument("--trees", type=int, default=32)
    ap.add_argument("--depth", type=int, default=7)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    gen = np.random.default_rng(0)
    data = gen.normal(size=(args.n, args.d)).astype(np.float32)
    q = gen.normal(size=args.d)
    idx, w = levels(args.d, args.depth, 0)
    f = forest(_numba, data, args.trees, args.depth)
    cand = np.arange(0, args.n, 7, dtype=np.int64)
    m = min(100, args.n)
    qrows = np.arange(m, dtype=np.int64)
    gt = np.stack([exhaustive_knn(data, data[i], 5, exclude=i).indices for i in qrows]).astype(np.int64)

    cases = [
        ("sq_dists_all", lambda k: k.sq_dists_all(data, q)),
        ("project_all", lambda k: k.project_all(data, idx[0], w[0])),
        ("build_tree", lambda k: k.build_tree(data, idx, w)),
        ("vote_counts", lambda k: k.vote_counts(q, *f, args.depth)),
        ("select_k", lambda k: k.select_k(data, q, cand, 10)),
        (f"tune_stats[{m}q]", lambda k: k.tune_stats(data, qrows, gt, *f)),
    ]
    print(f"n={args.n} d={args.d} T={args.trees} l={args.depth}")
    print(f"{'kernel':<18}{'numba ms':>12}{'numpy ms':>12}{'speedup':>10}")
    for name, fn in cases:
        fn(_numba)  # compile or load from cache
        t_nb = best_of(lambda: fn(_numba), args.repeat)
        t_np = best_of(lambda: fn(_numpy), args.repeat)
        print(f"{name:<18}{t_nb * 1e3:>12.3f}{t_np * 1e3:>12.3f}{t_np / t_nb:>10.1f}x")


if __name__ == "__main__":
    main()
