"""Kernel backend selection.

Set ``RPKNN_DISABLE_NUMBA=1`` to force the pure-numpy path. The numba path
is used otherwise, falling back to numpy if numba cannot be imported.
"""
import os

import numpy as np

_disabled = os.environ.get("RPKNN_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

if not _disabled:
    try:
        from . import _numba as _impl
        BACKEND = "numba"
    except ImportError:  # pragma: no cover - numba is a declared dependency
        _disabled = True

if _disabled:
    from . import _numpy as _impl
    BACKEND = "numpy"

sq_dists = _impl.sq_dists
sq_dists_all = _impl.sq_dists_all
project_point = _impl.project_point
project_all = _impl.project_all
build_tree = _impl.build_tree
descend = _impl.descend
vote_counts = _impl.vote_counts
select_k = _impl.select_k
tune_stats = _impl.tune_stats
fnv1a64 = _impl.fnv1a64

__all__ = [
    "BACKEND",
    "sq_dists",
    "sq_dists_all",
    "project_point",
    "project_all",
    "build_tree",
    "descend",
    "vote_counts",
    "select_k",
    "tune_stats",
    "fnv1a64",
    "warmup",
]


def warmup():
    """Run every kernel once on tiny inputs so later timings exclude compilation."""
    data = np.arange(8, dtype=np.float32).reshape(4, 2)
    q = np.zeros(2)
    idx = np.zeros((1, 1), dtype=np.int64)
    w = np.ones((1, 1))
    sq_dists(data, np.arange(4, dtype=np.int64), q)
    sq_dists_all(data, q)
    project_point(q, idx[0], w[0])
    project_all(data, idx[0], w[0])
    order, thr, offs = build_tree(data, idx, w)
    descend(q, idx, w, thr, 1)
    vote_counts(q, idx[None], w[None], thr[None], order[None], offs[None], 1)
    select_k(data, q, np.arange(4, dtype=np.int64), 2)
    tune_stats(data, np.array([0], dtype=np.int64), np.array([[1]], dtype=np.int64),
               idx[None], w[None], thr[None], order[None], offs[None])
    fnv1a64(np.zeros(4, dtype=np.uint8))
