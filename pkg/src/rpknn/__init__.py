"""Approximate kNN search and classification with sparse random-projection tree forests."""
__version__ = "0.1.0"

from ._kernels import BACKEND
from .classifier import BallTreeSearcher, ExhaustiveSearcher, MRPTSearcher, Prediction, knn_classify, predict_batch
from .dataset import (
    FoldPlan,
    LabelVector,
    generate_synthetic,
    load_binary,
    load_csv,
    load_labels,
    save_binary,
    save_labels,
    stratified_kfold,
)
from .errors import FormatError, IntegrityError
from .evaluation import MethodConfig, confusion, cross_validate, metrics, recall_at_k, recall_sweep
from .exact import BallTree, FallbackLevel, QueryResult, ball_tree_knn, build_ball_tree, exhaustive_knn
from .mrpt import (
    AutoTuneConfig,
    AutoTuneResult,
    MRPTIndex,
    approx_knn,
    autotune,
    build_index,
    candidates,
    load_index,
    save_index,
)
from .projection import RngStream, SparseVector, project, sample_sparse_vector
from .rptree import RPTree, build_tree, query_leaf
