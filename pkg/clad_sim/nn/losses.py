"""Reconstruction and classification losses with their output gradients."""

from typing import Tuple

import numpy as np
from scipy.special import logsumexp

from ..exceptions import ShapeError
from .layers import Matrix, softmax


def _check_same_shape(x: Matrix, x_hat: Matrix) -> Tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ShapeError(
            f"Shape mismatch between target {x.shape} and reconstruction {x_hat.shape}"
        )
    return x, x_hat


def per_sample_squared_error(x: Matrix, x_hat: Matrix) -> np.ndarray:
    """Mean over features of the squared error, one value per row."""
    x, x_hat = _check_same_shape(x, x_hat)
    if x.shape[0] == 0:
        return np.zeros(0)
    return np.mean((x - x_hat) ** 2, axis=1)


def mse_loss(x: Matrix, x_hat: Matrix) -> float:
    """Mean over every batch element and feature of the squared difference."""
    x, x_hat = _check_same_shape(x, x_hat)
    if x.size == 0:
        return 0.0
    return float(np.mean((x - x_hat) ** 2))


def mse_grad(x: Matrix, x_hat: Matrix) -> Matrix:
    """dL_MSE / dx_hat."""
    x, x_hat = _check_same_shape(x, x_hat)
    if x.size == 0:
        return np.zeros_like(x_hat)
    return 2.0 * (x_hat - x) / x.size


def _check_labels(logits: Matrix, labels) -> Tuple[np.ndarray, np.ndarray]:
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    if logits.ndim != 2:
        raise ShapeError("Logits must be a 2-D matrix")
    if labels.shape != (logits.shape[0],):
        raise ShapeError(f"Expected {logits.shape[0]} labels, got shape {labels.shape}")
    num_classes = logits.shape[1]
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ShapeError(
            f"Labels must lie in [0, {num_classes}); got {labels.min()}..{labels.max()}"
        )
    return logits, labels.astype(np.int64)


def cross_entropy(logits: Matrix, labels) -> float:
    """Mean negative log-softmax probability of the true class."""
    logits, labels = _check_labels(logits, labels)
    if labels.size == 0:
        return 0.0
    log_norm = logsumexp(logits, axis=1)
    picked = logits[np.arange(labels.size), labels]
    return float(np.mean(log_norm - picked))


def cross_entropy_grad(logits: Matrix, labels) -> Matrix:
    """dL_CE / dlogits = (softmax - onehot) / batch."""
    logits, labels = _check_labels(logits, labels)
    if labels.size == 0:
        return np.zeros_like(logits)
    probs = softmax(logits)
    probs[np.arange(labels.size), labels] -= 1.0
    return probs / labels.size
