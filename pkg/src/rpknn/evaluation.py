"""Classification metrics, recall measurement and cross-validated benchmarks."""
import csv
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .classifier import BallTreeSearcher, ExhaustiveSearcher, MRPTSearcher, knn_classify, predict_batch
from .dataset import LabelVector, stratified_kfold
from .exact import QueryResult, exhaustive_knn
from .mrpt import AutoTuneConfig, autotune, build_index, default_depth
from .projection import derive_seed

METRIC_NAMES = ("accuracy", "sensitivity", "specificity", "precision", "recall", "f1")
METHODS = ("exhaustive", "balltree", "mrpt")


def confusion(y_true, y_pred, n_classes) -> np.ndarray:
    """``C x C`` count matrix; entry ``(t, p)`` counts true ``t`` predicted ``p``."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"length mismatch: {y_true.shape[0]} true vs {y_pred.shape[0]} predicted")
    for ids in (y_true, y_pred):
        if ids.size and (ids.min() < 0 or ids.max() >= n_classes):
            raise ValueError(f"class id out of range [0, {n_classes})")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    sensitivity: float
    specificity: float
    precision: float
    recall: float
    f1: float
    per_class: dict = field(default_factory=dict, compare=False)

    def as_dict(self):
        return {name: getattr(self, name) for name in METRIC_NAMES}


def _ratio(num, den):
    out = np.zeros_like(num, dtype=np.float64)
    np.divide(num, den, out=out, where=den != 0)
    return out


def metrics(cm) -> MetricsReport:
    """Accuracy plus macro-averaged one-vs-rest measures.

    Any per-class ratio with a zero denominator counts as 0. Sensitivity and
    recall are the same quantity.
    """
    cm = np.asarray(cm, dtype=np.int64)
    total = int(cm.sum())
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1] or cm.shape[0] == 0 or total == 0:
        raise ValueError("metrics need a non-empty square confusion matrix")
    tp = np.diag(cm).astype(np.float64)
    fn = cm.sum(axis=1) - tp
    fp = cm.sum(axis=0) - tp
    tn = total - tp - fn - fp
    rec = _ratio(tp, tp + fn)
    spec = _ratio(tn, tn + fp)
    prec = _ratio(tp, tp + fp)
    f1 = _ratio(2 * prec * rec, prec + rec)
    recall = float(rec.mean())
    return MetricsReport(
        accuracy=float(tp.sum() / total),
        sensitivity=recall,
        specificity=float(spec.mean()),
        precision=float(prec.mean()),
        recall=recall,
        f1=float(f1.mean()),
        per_class={"recall": rec, "specificity": spec, "precision": prec, "f1": f1},
    )


def recall_at_k(approx: QueryResult, exact: QueryResult) -> float:
    k = len(exact)
    if len(approx) != k or k == 0:
        raise ValueError(f"results hold {len(approx)} and {k} neighbors; need equal non-zero counts")
    return np.intersect1d(approx.indices, exact.indices).shape[0] / k


# -- benchmarking ------------------------------------------------------------


@dataclass(frozen=True)
class MethodConfig:
    """Which searcher to build per fold, and how.

    For ``mrpt``, setting ``target_recall`` auto-tunes ``(T, l, v)`` on each
    training fold; otherwise ``trees``/``depth``/``votes`` are used, with
    untuned defaults for any left as ``None``.
    """

    method: str = "exhaustive"
    target_recall: float | None = None
    trees: int | None = None
    depth: int | None = None
    votes: int | None = None
    sparsity: float | None = None
    leaf_capacity: int = 40
    T_max: int = 32
    l_max: int | None = None
    validation_queries: int = 200

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")

    def as_dict(self):
        return asdict(self)


def make_searcher(cfg: MethodConfig, train, k, seed, threads=None):
    if cfg.method == "exhaustive":
        return ExhaustiveSearcher(train)
    if cfg.method == "balltree":
        return BallTreeSearcher(train, cfg.leaf_capacity, seed)
    if cfg.target_recall is not None:
        tune_cfg = AutoTuneConfig(
            target_recall=cfg.target_recall,
            k=k,
            T_max=cfg.T_max,
            l_max=cfg.l_max,
            validation_queries=cfg.validation_queries,
            sparsity_a=cfg.sparsity,
            seed=seed,
        )
        index, result = autotune(train, tune_cfg, threads=threads)
        return MRPTSearcher(index, result)
    trees = cfg.trees if cfg.trees is not None else 32
    depth = cfg.depth if cfg.depth is not None else default_depth(train.shape[0], k)
    index = build_index(train, trees, depth, cfg.sparsity, seed, cfg.votes or 1, threads=threads)
    return MRPTSearcher(index)


@dataclass
class BenchmarkRecord:
    method: str
    config: dict
    repetition: int
    fold: int
    seed: int
    metrics: MetricsReport
    build_seconds: float
    query_seconds: float
    warnings: list = field(default_factory=list)

    def to_dict(self):
        return {
            "repetition": self.repetition,
            "fold": self.fold,
            "seed": self.seed,
            "searcher": self.config,
            "metrics": self.metrics.as_dict(),
            "build_seconds": self.build_seconds,
            "query_seconds": self.query_seconds,
            "warnings": list(self.warnings),
        }


def cross_validate(data, labels: LabelVector, method: MethodConfig, folds=10, repetitions=5, k=5, seed=0, threads=None):
    """Repeated stratified k-fold evaluation of one method.

    Repetition ``r`` splits with seed ``seed + r``. Each fold builds a fresh
    searcher on its training rows only and classifies the held-out rows.
    """
    if folds < 2:
        raise ValueError(f"folds must be >= 2, got {folds}")
    if repetitions < 1:
        raise ValueError(f"repetitions must be >= 1, got {repetitions}")
    records = []
    for r in range(repetitions):
        plan = stratified_kfold(labels, folds, seed + r)
        for f, (train, test) in enumerate(plan.folds):
            fold_seed = derive_seed(seed, r, f)
            train_labels = labels.subset(train)
            missing = sorted(set(range(labels.n_classes)) - set(np.unique(train_labels.ids).tolist()))
            notes = [f"class {labels.class_names[c]!r} absent from training fold" for c in missing]

            t0 = time.perf_counter()
            searcher = make_searcher(method, data[train], k, fold_seed, threads)
            build_s = time.perf_counter() - t0
            preds, _, query_s = predict_batch(searcher, train_labels, data[test], k, threads)

            y_pred = np.array([p.class_id for p in preds], dtype=np.int64)
            report = metrics(confusion(labels.ids[test], y_pred, labels.n_classes))
            records.append(
                BenchmarkRecord(method.method, searcher.config(), r, f, fold_seed, report, build_s, query_s, notes)
            )
    return records


def summarize(records):
    """Mean and standard deviation of every metric over all fold x repetition cells."""
    keys = METRIC_NAMES + ("build_seconds", "query_seconds")
    rows = {key: [] for key in keys}
    for rec in records:
        for name in METRIC_NAMES:
            rows[name].append(getattr(rec.metrics, name))
        rows["build_seconds"].append(rec.build_seconds)
        rows["query_seconds"].append(rec.query_seconds)
    mean = {key: float(np.mean(v)) for key, v in rows.items()}
    std = {key: float(np.std(v)) for key, v in rows.items()}
    return {"mean": mean, "std": std}


def benchmark_json(method: MethodConfig, seed, records):
    return {
        "method": method.method,
        "config": method.as_dict(),
        "seed": seed,
        "records": [rec.to_dict() for rec in records],
        "summary": summarize(records),
    }


CSV_FIELDS = ("method", "repetition", "fold", "seed") + METRIC_NAMES + ("build_seconds", "query_seconds")


def write_records_csv(fh, records, header_comment=None):
    if header_comment:
        fh.write(f"# {header_comment}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for rec in records:
        m = rec.metrics
        w.writerow(
            [rec.method, rec.repetition, rec.fold, rec.seed]
            + [repr(getattr(m, name)) for name in METRIC_NAMES]
            + [repr(rec.build_seconds), repr(rec.query_seconds)]
        )


@dataclass(frozen=True)
class SweepRow:
    target_recall: float
    measured_recall: float
    accuracy: float
    baseline_accuracy: float
    query_seconds: float
    build_seconds: float


def recall_sweep(data, labels: LabelVector, targets, k=5, folds=10, seed=0, threads=None, **tune_kwargs):
    """Accuracy, measured recall and query time of auto-tuned MRPT per target.

    Every target is evaluated on the same fold plan. ``measured_recall`` is
    recall@k against exact search over the training rows, averaged over all
    held-out queries; ``baseline_accuracy`` is exact kNN accuracy on the same
    folds. ``query_seconds`` is mean search time per query.
    """
    targets = [float(t) for t in targets]
    if not targets or any(not 0.0 < t <= 1.0 for t in targets):
        raise ValueError("targets must be a non-empty list of values in (0, 1]")
    if targets != sorted(targets):
        raise ValueError("targets must be sorted ascending")

    plan = stratified_kfold(labels, folds, seed)
    # exact neighbors and baseline predictions, shared by every target
    truth = []
    base_correct = 0
    for train, test in plan.folds:
        train_data, train_labels = data[train], labels.subset(train)
        exact = [exhaustive_knn(train_data, data[i], k) for i in test]
        base_correct += sum(
            int(knn_classify(res, train_labels, k).class_id == labels.ids[i]) for res, i in zip(exact, test)
        )
        truth.append(exact)
    n_test = sum(len(test) for _, test in plan.folds)
    baseline = base_correct / n_test

    rows = []
    for target in targets:
        recall_total, correct, q_time, b_time = 0.0, 0, 0.0, 0.0
        for f, (train, test) in enumerate(plan.folds):
            train_data, train_labels = data[train], labels.subset(train)
            cfg = MethodConfig("mrpt", target_recall=target, **tune_kwargs)
            t0 = time.perf_counter()
            searcher = make_searcher(cfg, train_data, k, derive_seed(seed, 0, f), threads)
            b_time += time.perf_counter() - t0
            for res_exact, i in zip(truth[f], test):
                t0 = time.perf_counter()
                res = searcher.knn(data[i], k)
                q_time += time.perf_counter() - t0
                recall_total += recall_at_k(res, res_exact)
                correct += int(knn_classify(res, train_labels, k).class_id == labels.ids[i])
        rows.append(
            SweepRow(target, recall_total / n_test, correct / n_test, baseline, q_time / n_test, b_time / folds)
        )
    return rows
