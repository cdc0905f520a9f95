"""
Evaluation Metrics

Confusion-matrix metrics for attack classification (macro F1, accuracy, multiclass MCC),
binary F1 for anomaly detection with "anomalous" as the positive class, and the
unweighted cross-client average reported each round.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from sklearn.metrics import confusion_matrix as sk_confusion_matrix
from sklearn.metrics import f1_score

from ..exceptions import ShapeError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConfusionMatrix:
    """C x C counts, rows = true class, columns = predicted class."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ShapeError(f"Confusion matrix must be square (got shape {counts.shape})")
        if np.any(counts < 0):
            raise ShapeError("Confusion matrix counts must be non-negative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def num_classes(self) -> int:
        return int(self.counts.shape[0])

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion_matrix(true_labels, predictions, num_classes: int) -> ConfusionMatrix:
    return ConfusionMatrix(
        sk_confusion_matrix(true_labels, predictions, labels=list(range(num_classes)))
    )


def _require_nonempty(cm: ConfusionMatrix) -> None:
    if cm.num_classes == 0 or cm.total == 0:
        raise ShapeError("Metric of an empty confusion matrix is undefined")


def macro_f1(cm: ConfusionMatrix) -> float:
    """
    Unweighted mean of per-class F1.

    Classes absent from both truth and predictions are left out of the mean; a class
    whose precision + recall denominator is zero counts as F1 = 0.
    """
    _require_nonempty(cm)
    counts = cm.counts
    tp = np.diag(counts).astype(np.float64)
    true_totals = counts.sum(axis=1)
    pred_totals = counts.sum(axis=0)
    present = (true_totals > 0) | (pred_totals > 0)
    denominator = true_totals + pred_totals
    scores = np.where(denominator > 0, 2.0 * tp / np.maximum(denominator, 1), 0.0)
    return float(scores[present].mean())


def accuracy(cm: ConfusionMatrix) -> float:
    _require_nonempty(cm)
    return float(np.trace(cm.counts)) / cm.total


def mcc(cm: ConfusionMatrix) -> float:
    """Multiclass Matthews correlation (Gorodkin); a zero denominator gives 0."""
    _require_nonempty(cm)
    counts = cm.counts.astype(np.float64)
    c = np.trace(counts)
    s = counts.sum()
    p = counts.sum(axis=0)
    t = counts.sum(axis=1)
    numerator = c * s - float(np.dot(p, t))
    denominator = math.sqrt((s * s - float(np.dot(p, p))) * (s * s - float(np.dot(t, t))))
    if denominator == 0.0:
        return 0.0
    return float(numerator / denominator)


def ad_truth(true_labels) -> np.ndarray:
    """Benign (0) maps to normal, every attack class to anomalous."""
    return (np.asarray(true_labels) != 0).astype(np.int64)


def ad_f1(true_labels, ad_predictions) -> float:
    """
    Binary F1 with the anomalous status as the positive class.

    A test set with no attacks scored entirely normal counts as perfect (1.0).
    """
    predictions = np.asarray(ad_predictions, dtype=np.int64)
    if predictions.size == 0:
        return float("nan")
    return float(f1_score(ad_truth(true_labels), predictions, pos_label=1, zero_division=1.0))


def binary_from_multiclass(cm: ConfusionMatrix) -> ConfusionMatrix:
    """Collapse to [[TN, FP], [FN, TP]] with benign as the negative class."""
    counts = cm.counts
    tn = counts[0, 0]
    fp = counts[0, 1:].sum()
    fn = counts[1:, 0].sum()
    tp = counts[1:, 1:].sum()
    return ConfusionMatrix(np.array([[tn, fp], [fn, tp]]))


def binary_f1(cm: ConfusionMatrix) -> float:
    """F1 of the positive (index 1) class of a 2 x 2 matrix; 1.0 with no positives at all."""
    tp = cm.counts[1, 1]
    denominator = 2 * tp + cm.counts[0, 1] + cm.counts[1, 0]
    return float(2 * tp / denominator) if denominator else 1.0


def average_over_clients(values: Sequence[Optional[float]], name: str = "metric") -> float:
    """Arithmetic mean over the clients that produced a value; NaN when none did."""
    kept = [float(v) for v in values if v is not None and not math.isnan(v)]
    skipped = len(values) - len(kept)
    if skipped:
        logger.debug(f"{name}: {skipped} of {len(values)} clients have no value and are excluded")
    if not kept:
        return float("nan")
    return float(np.mean(kept))
