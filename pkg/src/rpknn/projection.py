"""Sparse random projection directions."""
from dataclasses import dataclass

import numpy as np

from . import _kernels


class RngStream:
    """A counter-based random stream keyed by ``(seed, stream)``.

    Distinct stream ids give independent sequences, so per-tree draws do not
    depend on which thread builds which tree. An instance carries state and
    must not be shared between threads.
    """

    def __init__(self, seed: int, stream: int = 0):
        if not 0 <= seed < 2**64 or not 0 <= stream < 2**64:
            raise ValueError("seed and stream id must be 64-bit unsigned integers")
        self.seed = int(seed)
        self.stream = int(stream)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream,))
        self.generator = np.random.Generator(np.random.Philox(ss))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream={self.stream})"


def derive_seed(*parts: int) -> int:
    """Mix integers into one 64-bit seed (stable across runs and platforms)."""
    lo, hi = np.random.SeedSequence([int(p) for p in parts]).generate_state(2, np.uint32)
    return (int(hi) << 32) | int(lo)


@dataclass(frozen=True)
class SparseVector:
    dim: int
    indices: np.ndarray  # int64, strictly increasing
    weights: np.ndarray  # float64

    def __post_init__(self):
        idx, w = self.indices, self.weights
        if not 1 <= idx.shape[0] <= self.dim:
            raise ValueError(f"nnz must be in [1, {self.dim}], got {idx.shape[0]}")
        if w.shape != idx.shape:
            raise ValueError("indices and weights must have the same length")
        if np.any(np.diff(idx) <= 0) or idx[0] < 0 or idx[-1] >= self.dim:
            raise ValueError("indices must be strictly increasing and < dim")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")

    @property
    def nnz(self) -> int:
        return int(self.indices.shape[0])


def default_sparsity(d: int) -> float:
    return 1.0 / np.sqrt(d)


def nnz_for(d: int, sparsity_a: float) -> int:
    # round half up; python's round() would send 0.5 to 0
    return max(1, min(d, int(np.floor(sparsity_a * d + 0.5))))


def sample_sparse_vector(d: int, sparsity_a: float, rng: RngStream) -> SparseVector:
    """Draw ``max(1, round(a*d))`` distinct coordinates with N(0, 1) weights."""
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    if not 0.0 < sparsity_a <= 1.0:
        raise ValueError(f"sparsity must be in (0, 1], got {sparsity_a}")
    nnz = nnz_for(d, sparsity_a)
    gen = rng.generator
    idx = np.sort(gen.choice(d, size=nnz, replace=False)).astype(np.int64)
    w = gen.standard_normal(nnz)
    return SparseVector(d, idx, w)


def project(point, v: SparseVector) -> float:
    """Dot product of ``point`` with ``v``, accumulated in index order in float64."""
    q = np.ascontiguousarray(point, dtype=np.float64)
    if q.ndim != 1 or q.shape[0] != v.dim:
        raise ValueError(f"point has length {q.shape[-1] if q.ndim else 0}, direction has dim {v.dim}")
    return float(_kernels.project_point(q, v.indices, v.weights))
