"""kNN classification on top of any neighbor searcher."""
import time
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from ._parallel import pmap
from .dataset import LabelVector
from .exact import QueryResult, ball_tree_knn, build_ball_tree, exhaustive_knn
from .mrpt import MRPTIndex, approx_knn


class Searcher(Protocol):
    name: str
    dim: int

    def knn(self, q, k) -> QueryResult: ...

    def config(self) -> dict: ...


class ExhaustiveSearcher:
    name = "exhaustive"

    def __init__(self, data):
        self.data = data
        self.dim = data.shape[1]

    def knn(self, q, k):
        return exhaustive_knn(self.data, q, k)

    def config(self):
        return {}


class BallTreeSearcher:
    name = "balltree"

    def __init__(self, data, leaf_capacity=40, seed=0):
        self.leaf_capacity = leaf_capacity
        self.seed = seed
        self.tree = build_ball_tree(data, leaf_capacity, seed)
        self.dim = data.shape[1]

    def knn(self, q, k):
        return ball_tree_knn(self.tree, q, k)

    def config(self):
        return {"leaf_capacity": self.leaf_capacity, "seed": self.seed}


class MRPTSearcher:
    name = "mrpt"

    def __init__(self, index: MRPTIndex, tune=None):
        self.index = index
        self.tune = tune
        self.dim = index.data.shape[1]

    def knn(self, q, k):
        return approx_knn(self.index, q, k)

    def config(self):
        cfg = self.index.config()
        if self.tune is not None:
            cfg["estimated_recall"] = self.tune.estimated_recall
            cfg["infeasible"] = self.tune.infeasible
            cfg["exhaustive"] = self.tune.exhaustive
        return cfg


@dataclass(frozen=True)
class Prediction:
    class_id: int
    votes: np.ndarray  # per-class counts among the k neighbors
    tie_broken: bool


def knn_classify(result: QueryResult, train_labels: LabelVector, k: int) -> Prediction:
    """Majority vote over the ``k`` neighbor labels.

    Tied classes are separated by the smaller sum of neighbor distances, then
    by the lower class id.
    """
    if len(result) < k:
        raise ValueError(f"need {k} neighbors, result has {len(result)}")
    c = train_labels.n_classes
    labels = train_labels.ids[result.indices[:k]]
    votes = np.bincount(labels, minlength=c)
    top = np.flatnonzero(votes == votes.max())
    if top.shape[0] == 1:
        return Prediction(int(top[0]), votes, False)
    dist_sum = np.bincount(labels, weights=result.distances[:k], minlength=c)
    # lexsort: last key is primary
    winner = top[np.lexsort((top, dist_sum[top]))[0]]
    return Prediction(int(winner), votes, True)


def predict_batch(searcher, train_labels: LabelVector, queries, k, threads=None):
    """Classify every row of ``queries``.

    Returns ``(predictions, per_query_seconds, total_seconds)``; each query is
    timed on the thread that runs it.
    """
    queries = np.asarray(queries)
    if queries.ndim != 2:
        raise ValueError(f"queries must be 2-D, got shape {queries.shape}")
    if queries.shape[0] == 0:
        return [], np.zeros(0), 0.0
    if queries.shape[1] != searcher.dim:
        raise ValueError(f"queries have {queries.shape[1]} columns, searcher indexes {searcher.dim}")

    def one(i):
        t0 = time.perf_counter()
        res = searcher.knn(queries[i], k)
        pred = knn_classify(res, train_labels, k)
        return pred, time.perf_counter() - t0

    t0 = time.perf_counter()
    out = pmap(one, range(queries.shape[0]), threads)
    total = time.perf_counter() - t0
    return [p for p, _ in out], np.array([s for _, s in out]), total
