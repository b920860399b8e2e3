"""Command-line interface.

Exit status: 0 on success, 1 on runtime failure (I/O, corrupt files),
2 on usage errors (bad flags or arguments).
"""
import argparse
import csv
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from ._parallel import resolve_threads
from .classifier import predict_batch
from .dataset import (
    generate_synthetic,
    load_binary,
    load_csv,
    load_labels,
    save_binary,
    save_csv,
    save_labels,
)
from .errors import FormatError
from .evaluation import (
    MethodConfig,
    benchmark_json,
    cross_validate,
    make_searcher,
    recall_sweep,
    summarize,
    write_records_csv,
)
from .mrpt import AutoTuneConfig, autotune, build_index, default_depth, load_index, save_index
from .classifier import MRPTSearcher


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    subcommand: str
    inputs: dict = field(default_factory=dict)
    method: list = field(default_factory=list)
    k: int | None = None
    target_recall: float | None = None
    T: int | None = None
    l: int | None = None
    v: int | None = None
    sparsity_a: float | None = None
    folds: int | None = None
    repetitions: int | None = None
    seed: int | None = None
    output: str | None = None
    output_format: str | None = None
    extra: dict = field(default_factory=dict)


def _positive(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _non_negative(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _unit_interval(text):
    value = float(text)
    if not 0.0 < value <= 1.0:
        raise argparse.ArgumentTypeError(f"must be in (0, 1], got {value}")
    return value


def _targets(text):
    try:
        values = [_unit_interval(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse targets {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("no targets given")
    return sorted(values)


def _load_matrix(path):
    path = Path(path)
    if not path.exists():
        raise UsageError(f"data file not found: {path}")
    if path.suffix.lower() == ".csv":
        return load_csv(path)[0]
    return load_binary(path)


def _load_labels(path, n):
    if path is None:
        raise UsageError("a label file (--labels) is required")
    path = Path(path)
    if not path.exists():
        raise UsageError(f"label file not found: {path}")
    labels = load_labels(path)
    if len(labels) != n:
        raise UsageError(f"label file has {len(labels)} entries, data has {n} rows")
    return labels


def _config_line(run):
    return "run_config: " + json.dumps(asdict(run), sort_keys=True)


def _write_json(path, payload):
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _method_config(args, method):
    if method != "mrpt":
        return MethodConfig(method, leaf_capacity=args.leaf_capacity)
    if args.depth is not None or args.trees is not None or args.votes is not None:
        return MethodConfig(
            "mrpt", trees=args.trees, depth=args.depth, votes=args.votes, sparsity=args.sparsity
        )
    return MethodConfig(
        "mrpt",
        target_recall=args.recall,
        sparsity=args.sparsity,
        T_max=args.t_max,
        l_max=args.l_max,
        validation_queries=args.validation_queries,
    )


# -- subcommands -------------------------------------------------------------


def cmd_synth(args):
    data, labels = generate_synthetic(args.n, args.d, args.classes, args.spread, args.seed)
    prefix = Path(args.out)
    save_binary(data, prefix.with_name(prefix.name + ".annm"))
    save_labels(labels, prefix.with_name(prefix.name + ".annl"))
    print(f"wrote {prefix}.annm ({args.n}x{args.d}) and {prefix}.annl ({args.classes} classes)")


def cmd_convert(args):
    src, dst = Path(args.input), Path(args.output)
    if not src.exists():
        raise UsageError(f"input file not found: {src}")
    if src.suffix.lower() == ".csv":
        data, labels = load_csv(src, args.has_header, args.label_column)
        save_binary(data, dst)
        if labels is not None:
            out = Path(args.labels) if args.labels else dst.with_suffix(".annl")
            save_labels(labels, out)
        print(f"wrote {dst} ({data.shape[0]}x{data.shape[1]})")
    else:
        data = load_binary(src)
        labels = load_labels(args.labels) if args.labels else None
        save_csv(data, dst, labels)
        print(f"wrote {dst} ({data.shape[0]}x{data.shape[1]})")


def cmd_build(args):
    data = _load_matrix(args.data)
    depth = args.depth if args.depth is not None else default_depth(data.shape[0], args.k)
    index = build_index(data, args.trees, depth, args.sparsity, args.seed, args.votes, threads=args.threads)
    save_index(index, args.out)
    print(f"wrote {args.out}: T={index.n_trees} l={index.built_depth} v={index.vote_threshold}")


def cmd_tune(args):
    data = _load_matrix(args.data)
    cfg = AutoTuneConfig(
        target_recall=args.recall,
        k=args.k,
        T_max=args.t_max,
        l_max=args.l_max,
        validation_queries=args.validation_queries,
        sparsity_a=args.sparsity,
        seed=args.seed,
    )
    index, result = autotune(data, cfg, threads=args.threads)
    save_index(index, args.out)
    run = RunConfig(
        "tune", {"data": str(args.data)}, ["mrpt"], k=args.k, target_recall=args.recall,
        T=result.chosen[0], l=result.chosen[1], v=result.chosen[2], sparsity_a=args.sparsity,
        seed=args.seed, output=str(args.out), output_format="json",
        extra={"T_max": args.t_max, "l_max": args.l_max, "validation_queries": args.validation_queries},
    )
    report = {"run_config": asdict(run), **result.to_dict()}
    _write_json(args.report, report)
    T, l, v = result.chosen
    flag = " (exhaustive)" if result.exhaustive else (" (infeasible)" if result.infeasible else "")
    print(f"chose T={T} l={l} v={v} estimated_recall={result.estimated_recall:.4f}{flag}", file=sys.stderr)


def cmd_query(args):
    data = _load_matrix(args.data)
    queries = _load_matrix(args.queries)
    if queries.shape[1] != data.shape[1]:
        raise UsageError(f"queries have {queries.shape[1]} columns, data has {data.shape[1]}")
    index = load_index(args.index, data)
    if args.votes is not None:
        index = index.configured(vote_threshold=args.votes)
    results = index.knn_batch(queries, args.k, threads=args.threads)
    run = RunConfig(
        "query", {"data": str(args.data), "index": str(args.index), "queries": str(args.queries)},
        ["mrpt"], k=args.k, T=index.n_trees, l=index.depth_in_use, v=index.vote_threshold,
        seed=index.seed, output=args.out, output_format="csv",
    )
    with _open_out(args.out) as fh:
        fh.write(f"# {_config_line(run)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["query_row", "rank", "index", "distance", "candidates_examined", "fallback_level"])
        for row, res in enumerate(results):
            for rank, (i, dist) in enumerate(zip(res.indices, res.distances)):
                w.writerow([row, rank, int(i), repr(float(dist)), res.candidates_examined, res.fallback_level.value])


def cmd_classify(args):
    data = _load_matrix(args.data)
    labels = _load_labels(args.labels, data.shape[0])
    queries = _load_matrix(args.queries)
    if queries.shape[1] != data.shape[1]:
        raise UsageError(f"queries have {queries.shape[1]} columns, data has {data.shape[1]}")
    if args.index is not None:
        if args.method != "mrpt":
            raise UsageError("--index only applies to --method mrpt")
        searcher = MRPTSearcher(load_index(args.index, data))
    else:
        searcher = make_searcher(_method_config(args, args.method), data, args.k, args.seed, args.threads)
    preds, seconds, _ = predict_batch(searcher, labels, queries, args.k, threads=args.threads)
    run = RunConfig(
        "classify", {"data": str(args.data), "labels": str(args.labels), "queries": str(args.queries),
                     "index": args.index},
        [args.method], k=args.k, target_recall=args.recall, T=args.trees, l=args.depth, v=args.votes,
        sparsity_a=args.sparsity, seed=args.seed, output=args.out, output_format="csv",
        extra={"searcher": searcher.config()},
    )
    names = labels.class_names
    with _open_out(args.out) as fh:
        fh.write(f"# {_config_line(run)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["query_row", "predicted_class_name", "votes", "tie_broken", "query_seconds"])
        for row, (p, s) in enumerate(zip(preds, seconds)):
            votes = ";".join(f"{names[c]}:{int(n)}" for c, n in enumerate(p.votes) if n)
            w.writerow([row, names[p.class_id], votes, int(p.tie_broken), repr(float(s))])


def cmd_cv(args):
    data = _load_matrix(args.data)
    labels = _load_labels(args.labels, data.shape[0])
    methods = args.method or ["exhaustive", "mrpt"]
    run = RunConfig(
        "cv", {"data": str(args.data), "labels": str(args.labels)}, methods, k=args.k,
        target_recall=args.recall, T=args.trees, l=args.depth, v=args.votes, sparsity_a=args.sparsity,
        folds=args.folds, repetitions=args.reps, seed=args.seed, output=args.out, output_format=args.format,
    )
    results, all_records = [], []
    for method in methods:
        cfg = _method_config(args, method)
        records = cross_validate(data, labels, cfg, args.folds, args.reps, args.k, args.seed, args.threads)
        all_records.extend(records)
        results.append(benchmark_json(cfg, args.seed, records))
        mean = summarize(records)["mean"]
        print(
            f"{method:<10} accuracy={mean['accuracy']:.4f} f1={mean['f1']:.4f} "
            f"build={mean['build_seconds']:.4f}s query={mean['query_seconds']:.4f}s",
        )
    if args.format == "json":
        _write_json(args.out, {"run_config": asdict(run), "results": results})
    else:
        with _open_out(args.out) as fh:
            write_records_csv(fh, all_records, _config_line(run))


def cmd_sweep(args):
    data = _load_matrix(args.data)
    labels = _load_labels(args.labels, data.shape[0])
    rows = recall_sweep(
        data, labels, args.targets, k=args.k, folds=args.folds, seed=args.seed, threads=args.threads,
        T_max=args.t_max, l_max=args.l_max, validation_queries=args.validation_queries, sparsity=args.sparsity,
    )
    run = RunConfig(
        "sweep", {"data": str(args.data), "labels": str(args.labels)}, ["mrpt"], k=args.k,
        sparsity_a=args.sparsity, folds=args.folds, repetitions=1, seed=args.seed, output=args.out,
        output_format=args.format, extra={"targets": args.targets, "T_max": args.t_max, "l_max": args.l_max},
    )
    if args.format == "json":
        _write_json(args.out, {"run_config": asdict(run), "rows": [asdict(r) for r in rows]})
    else:
        with _open_out(args.out) as fh:
            fh.write(f"# {_config_line(run)}\n")
            w = csv.writer(fh, lineterminator="\n")
            fields = list(asdict(rows[0]))
            w.writerow(fields)
            for r in rows:
                w.writerow([repr(v) for v in asdict(r).values()])
    for r in rows:
        print(f"target={r.target_recall:.2f} recall={r.measured_recall:.4f} accuracy={r.accuracy:.4f}")


class _open_out:
    def __init__(self, path):
        self.path = path

    def __enter__(self):
        if self.path is None or self.path == "-":
            self.fh = None
            return sys.stdout
        self.fh = open(self.path, "w", newline="")
        return self.fh

    def __exit__(self, *exc):
        if self.fh is not None:
            self.fh.close()


# -- parser ------------------------------------------------------------------


def _add_mrpt_flags(p, tune=True):
    p.add_argument("--trees", type=_positive, default=None, help="number of trees T")
    p.add_argument("--depth", type=_non_negative, default=None, help="tree depth l")
    p.add_argument("--votes", type=_positive, default=None, help="vote threshold v")
    p.add_argument("--sparsity", type=_unit_interval, default=None, help="projection density a (default 1/sqrt(d))")
    if tune:
        p.add_argument("--recall", type=_unit_interval, default=0.85, help="target recall for auto-tuning")
        p.add_argument("--t-max", type=_positive, default=32)
        p.add_argument("--l-max", type=_positive, default=None)
        p.add_argument("--validation-queries", type=_positive, default=200)


def build_parser():
    parser = argparse.ArgumentParser(prog="rpknn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=_positive, default=None, help="worker threads (default: $RPF_THREADS or 1)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic labelled dataset")
    p.add_argument("--n", type=_positive, required=True)
    p.add_argument("--d", type=_positive, required=True)
    p.add_argument("--classes", type=_positive, required=True)
    p.add_argument("--spread", type=float, default=1.0)
    p.add_argument("--out", required=True, help="output prefix; writes PREFIX.annm and PREFIX.annl")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("convert", help="convert between CSV and ANNM")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--has-header", action="store_true")
    p.add_argument("--label-column", default=None, help="0-based column number or header name")
    p.add_argument("--labels", default=None, help="ANNL path to write (csv input) or read (annm input)")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("build", parents=[common], help="build an MRPT index with fixed parameters")
    p.add_argument("--data", required=True)
    p.add_argument("--trees", type=_positive, default=32)
    p.add_argument("--depth", type=_non_negative, default=None)
    p.add_argument("--votes", type=_positive, default=1)
    p.add_argument("--sparsity", type=_unit_interval, default=None)
    p.add_argument("--k", type=_positive, default=5, help="used only to pick the default depth")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("tune", parents=[common], help="auto-tune (T, l, v) for a target recall")
    p.add_argument("--data", required=True)
    p.add_argument("--recall", type=_unit_interval, default=0.85)
    p.add_argument("--k", type=_positive, default=5)
    p.add_argument("--t-max", type=_positive, default=32)
    p.add_argument("--l-max", type=_positive, default=None)
    p.add_argument("--validation-queries", type=_positive, default=200)
    p.add_argument("--sparsity", type=_unit_interval, default=None)
    p.add_argument("--out", required=True, help="index output path")
    p.add_argument("--report", default="-", help="tuning report JSON path (default stdout)")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("query", parents=[common], help="approximate kNN queries against an index")
    p.add_argument("--data", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--k", type=_positive, default=5)
    p.add_argument("--votes", type=_positive, default=None)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("classify", parents=[common], help="kNN-classify query rows")
    p.add_argument("--data", required=True)
    p.add_argument("--labels", default=None)
    p.add_argument("--queries", required=True)
    p.add_argument("--method", choices=["exhaustive", "balltree", "mrpt"], default="exhaustive")
    p.add_argument("--index", default=None, help="prebuilt ANNI index (mrpt only)")
    p.add_argument("--k", type=_positive, default=5)
    p.add_argument("--leaf-capacity", type=_positive, default=40)
    _add_mrpt_flags(p)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("cv", parents=[common], help="repeated stratified cross-validation")
    p.add_argument("--data", required=True)
    p.add_argument("--labels", default=None)
    p.add_argument("--method", action="append", choices=["exhaustive", "balltree", "mrpt"])
    p.add_argument("--k", type=_positive, default=5)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--reps", type=_positive, default=5)
    p.add_argument("--leaf-capacity", type=_positive, default=40)
    _add_mrpt_flags(p)
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("sweep", parents=[common], help="accuracy/recall/time across target recalls")
    p.add_argument("--data", required=True)
    p.add_argument("--labels", default=None)
    p.add_argument("--targets", type=_targets, default=_targets("0.5,0.6,0.7,0.8,0.9,0.97"))
    p.add_argument("--k", type=_positive, default=5)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--t-max", type=_positive, default=32)
    p.add_argument("--l-max", type=_positive, default=None)
    p.add_argument("--validation-queries", type=_positive, default=200)
    p.add_argument("--sparsity", type=_unit_interval, default=None)
    p.add_argument("--format", choices=["json", "csv"], default="csv")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if hasattr(args, "threads"):
            args.threads = resolve_threads(args.threads)
        args.func(args)
    except UsageError as exc:
        print(f"rpknn {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (FormatError, OSError) as exc:
        print(f"rpknn {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"rpknn {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
