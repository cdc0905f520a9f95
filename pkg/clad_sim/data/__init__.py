"""Device datasets, the synthetic traffic generator and client partitioning."""

from .dataset import (
    BENIGN_LABEL,
    Dataset,
    Sample,
    ScalerParams,
    apply_scaler,
    benign_subset,
    concat,
    fit_scaler,
    load_csv,
    scan_labels,
    split_train_test,
    write_csv,
)
from .partition import (
    ClientDataset,
    PartitionMode,
    PartitionSpec,
    build_population,
    check_sample_budget,
    derive_clients,
    dirichlet_partition,
    largest_remainder,
    mark_unlabeled,
    passthrough_clients,
    sample_shortfall,
)
from .synthetic import SyntheticSpec, cluster_means, synth_generate

__all__ = [
    "BENIGN_LABEL",
    "ClientDataset",
    "Dataset",
    "PartitionMode",
    "PartitionSpec",
    "Sample",
    "ScalerParams",
    "SyntheticSpec",
    "apply_scaler",
    "benign_subset",
    "build_population",
    "check_sample_budget",
    "cluster_means",
    "concat",
    "derive_clients",
    "dirichlet_partition",
    "fit_scaler",
    "largest_remainder",
    "load_csv",
    "mark_unlabeled",
    "passthrough_clients",
    "sample_shortfall",
    "scan_labels",
    "split_train_test",
    "synth_generate",
    "write_csv",
]
