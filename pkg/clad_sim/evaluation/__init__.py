"""Evaluation metrics and communication/computation cost accounting."""

from .accounting import (
    Algorithm,
    Budget,
    CostLedger,
    Phase,
    Resource,
    format_bytes,
    metric_at_budget,
    model_bytes,
    parse_budget,
    record_round,
)
from .metrics import (
    ConfusionMatrix,
    accuracy,
    ad_f1,
    average_over_clients,
    binary_from_multiclass,
    confusion_matrix,
    macro_f1,
    mcc,
)

__all__ = [
    "Algorithm",
    "Budget",
    "ConfusionMatrix",
    "CostLedger",
    "Phase",
    "Resource",
    "accuracy",
    "ad_f1",
    "average_over_clients",
    "binary_from_multiclass",
    "confusion_matrix",
    "format_bytes",
    "macro_f1",
    "mcc",
    "metric_at_budget",
    "model_bytes",
    "parse_budget",
    "record_round",
]
