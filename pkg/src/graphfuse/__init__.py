"""graphfuse: mutual-information feature graphs plus an edge-aware
attention network with selective state-space global fusion, for
multimodal prognosis at desk scale."""

from .config import RunConfig, config_fingerprint
from .errors import ContractError, DimensionError, GraphfuseError, InvariantError
from .graphbuild import (
    FeatureGraph,
    MiTable,
    PatientRecord,
    assemble_nodes,
    build_edges,
    build_graph,
    edge_weight,
    estimate_mi,
    graph_from_json,
    graph_to_json,
    standardize,
)
from .metrics import auc_score, compute_metrics
from .model import ModelParams, cross_entropy, forward, init_model, predict_logits
from .tensor import Tensor, concat, leaky_relu, matmul, softmax
from .train import (
    MetricsReport,
    cross_validate,
    run_ablation,
    stratified_folds,
    train_fold,
)

__version__ = "0.1.0"

__all__ = [
    "ContractError",
    "DimensionError",
    "FeatureGraph",
    "GraphfuseError",
    "InvariantError",
    "MetricsReport",
    "MiTable",
    "ModelParams",
    "PatientRecord",
    "RunConfig",
    "Tensor",
    "assemble_nodes",
    "auc_score",
    "build_edges",
    "build_graph",
    "compute_metrics",
    "concat",
    "config_fingerprint",
    "cross_entropy",
    "cross_validate",
    "edge_weight",
    "estimate_mi",
    "forward",
    "graph_from_json",
    "graph_to_json",
    "init_model",
    "leaky_relu",
    "matmul",
    "predict_logits",
    "run_ablation",
    "softmax",
    "standardize",
    "stratified_folds",
    "train_fold",
]
