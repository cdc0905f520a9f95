"""CLAD protocol, baseline algorithms, server-side clustering and client-side training."""

from .algorithms import (
    CflAdAlgorithm,
    CladAlgorithm,
    ExperimentResult,
    FedAvgAlgorithm,
    FederatedAlgorithm,
    IfcaAlgorithm,
    LocalAlgorithm,
    build_algorithm,
    run_cfl_ad,
    run_experiment,
)
from .client import (
    ClientEvaluation,
    ClientState,
    ClientUpdate,
    TrainHyper,
    compute_loss_vector,
    evaluate_client,
    local_train,
)
from .clustering import (
    ClusterAssignment,
    LossVector,
    align_labels,
    assignment_purity,
    build_match_cost,
    kmeans,
    min_cost_matching,
    weight_pca_kmeans,
)
from .server import (
    RoundLog,
    ServerState,
    aggregate_cluster,
    check_stabilization,
    clad_round,
    init_server,
    stabilized_round,
)

__all__ = [
    "CflAdAlgorithm",
    "CladAlgorithm",
    "ClientEvaluation",
    "ClientState",
    "ClientUpdate",
    "ClusterAssignment",
    "ExperimentResult",
    "FedAvgAlgorithm",
    "FederatedAlgorithm",
    "IfcaAlgorithm",
    "LocalAlgorithm",
    "LossVector",
    "RoundLog",
    "ServerState",
    "TrainHyper",
    "aggregate_cluster",
    "align_labels",
    "assignment_purity",
    "build_algorithm",
    "build_match_cost",
    "check_stabilization",
    "clad_round",
    "compute_loss_vector",
    "evaluate_client",
    "init_server",
    "kmeans",
    "local_train",
    "min_cost_matching",
    "run_cfl_ad",
    "run_experiment",
    "stabilized_round",
    "weight_pca_kmeans",
]
