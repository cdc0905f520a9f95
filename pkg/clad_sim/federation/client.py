"""
Federated Client

Client-side work of every protocol: seeded local training of a received model,
benign-only loss-vector fingerprinting, full-loss scoring for IFCA, and evaluation of
the client's test set under the inference scenario its label availability allows.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from ..data.partition import ClientDataset
from ..evaluation.metrics import (
    ConfusionMatrix,
    accuracy,
    ad_f1,
    confusion_matrix,
    macro_f1,
    mcc,
)
from ..exceptions import ConfigurationError
from ..models.dm2a import (
    AnomalyStatus,
    AnomalyThreshold,
    DM2AModel,
    calibrate_threshold,
    composite_gradients,
    composite_loss,
    forward_dual,
    infer_labeled,
    infer_unlabeled,
    reconstruction_fingerprint,
)
from ..nn.optim import OptimizerState, adamw_step, apply_to_layers, layer_tensors
from ..utils.seeding import STREAM_TRAIN, rng_for

logger = logging.getLogger(__name__)


@dataclass
class TrainHyper:
    """Local training and protocol-length hyperparameters."""

    local_epochs: int = 5
    batch_size: int = 32
    max_rounds: int = 100
    learning_rate: float = 0.01
    weight_decay: float = 1e-4
    stabilization_patience: int = 3

    def problems(self) -> List[str]:
        issues = []
        if self.local_epochs < 0:
            issues.append(f"local_epochs must be non-negative (got {self.local_epochs})")
        if self.batch_size < 1:
            issues.append(f"batch_size must be positive (got {self.batch_size})")
        if self.max_rounds < 1:
            issues.append(f"max_rounds must be positive (got {self.max_rounds})")
        if not self.learning_rate > 0:
            issues.append(f"learning_rate must be positive (got {self.learning_rate})")
        if self.weight_decay < 0:
            issues.append(f"weight_decay must be non-negative (got {self.weight_decay})")
        if self.stabilization_patience < 1:
            issues.append(
                f"stabilization_patience must be positive (got {self.stabilization_patience})"
            )
        return issues

    def validate(self) -> None:
        issues = self.problems()
        if issues:
            raise ConfigurationError("Invalid training hyperparameters", issues)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class ClientState:
    data: ClientDataset
    optimizer: Optional[OptimizerState] = None
    assignment: Optional[int] = None

    @property
    def client_id(self) -> int:
        return self.data.client_id


@dataclass(frozen=True)
class ClientUpdate:
    client_id: int
    model_index: int
    weights: np.ndarray
    n_samples: int


def local_train(
    client: ClientState,
    model: DM2AModel,
    hyper: TrainHyper,
    seed: int,
    round_index: int,
    model_index: int = 0,
) -> Optional[ClientUpdate]:
    """
    local_epochs of mini-batch AdamW on the composite loss at the client's alpha.

    The optimizer starts fresh every round. Mini-batch order and dropout masks come from
    the (seed, round, client) stream, so they do not depend on which model is trained.

    Returns:
        The trained weights, or None when the client has no training data
    """
    data = client.data
    n = len(data.train)
    if n == 0:
        logger.warning(f"Client {data.label} has an empty train set; skipped this round")
        return None

    rng = rng_for(seed, round_index, data.client_id, STREAM_TRAIN)
    state = OptimizerState(learning_rate=hyper.learning_rate, weight_decay=hyper.weight_decay)
    x = data.train.features
    y = data.train.labels if data.alpha > 0 else None

    layers = model.layers
    params = layer_tensors(layers)
    for _ in range(hyper.local_epochs):
        order = rng.permutation(n)
        for start in range(0, n, hyper.batch_size):
            batch = order[start : start + hyper.batch_size]
            current = model.with_layers(apply_to_layers(layers, params))
            _, grads = composite_gradients(
                current, x[batch], None if y is None else y[batch], data.alpha, rng
            )
            params, state = adamw_step(params, grads, state)
    client.optimizer = state

    trained = model.with_layers(apply_to_layers(layers, params))
    return ClientUpdate(data.client_id, model_index, trained.flatten(), n)


def train_loss(client: ClientDataset, model: DM2AModel) -> float:
    """Composite loss over the whole train set in inference mode."""
    out = forward_dual(model, client.train.features, training=False)
    labels = client.train.labels if client.alpha > 0 else None
    return composite_loss(client.train.features, out, labels, client.alpha)


def compute_loss_vector(client: ClientDataset, models: Sequence[DM2AModel]) -> np.ndarray:
    """Benign reconstruction MSE under each model; the classifier is never evaluated."""
    benign = client.train_benign.features
    return np.array([reconstruction_fingerprint(m, benign) for m in models])


def feature_mean(client: ClientDataset) -> np.ndarray:
    return client.train.features.mean(axis=0)


@dataclass
class ClientEvaluation:
    """Test-set metrics of one client; CLS fields stay None on the threshold path."""

    client_id: int
    labeled: bool
    ad_path: str
    ad_f1: Optional[float] = None
    cls_f1: Optional[float] = None
    cls_acc: Optional[float] = None
    mcc: Optional[float] = None
    confusion: Optional[ConfusionMatrix] = None
    tau: Optional[float] = None


AD_PATH_CLASSIFIER = "classifier"
AD_PATH_THRESHOLD = "threshold"


def _threshold_for(client: ClientDataset, model: DM2AModel) -> Optional[AnomalyThreshold]:
    if len(client.benign_val):
        return calibrate_threshold(model, client.benign_val.features)
    benign = client.train_benign
    if len(benign):
        logger.debug(f"Client {client.label}: no benign validation set, calibrating on train")
        return calibrate_threshold(model, benign.features)
    return None


def evaluate_client(
    client: ClientDataset, model: DM2AModel, ad_only: bool = False
) -> ClientEvaluation:
    """
    Score the client's test set.

    Labeled clients predict classes and derive anomaly status as predicted class !=
    benign. Unlabeled clients (and every client when ad_only) calibrate a threshold on
    their benign validation set and flag samples whose reconstruction error exceeds it.
    """
    test = client.test
    use_classifier = client.labeled and not ad_only
    path = AD_PATH_CLASSIFIER if use_classifier else AD_PATH_THRESHOLD
    result = ClientEvaluation(client.client_id, client.labeled, path)
    if len(test) == 0:
        logger.warning(f"Client {client.label} has an empty test set; not evaluated")
        return result

    if use_classifier:
        predictions = infer_labeled(model, test.features)
        cm = confusion_matrix(test.labels, predictions, test.class_count)
        result.confusion = cm
        result.cls_f1 = macro_f1(cm)
        result.cls_acc = accuracy(cm)
        result.mcc = mcc(cm)
        result.ad_f1 = ad_f1(test.labels, (predictions != 0).astype(np.int64))
        return result

    tau = _threshold_for(client, model)
    if tau is None:
        logger.warning(f"Client {client.label} has no benign samples to calibrate a threshold")
        return result
    statuses = infer_unlabeled(model, test.features, tau)
    result.tau = tau.tau
    result.ad_f1 = ad_f1(test.labels, statuses == AnomalyStatus.ANOMALOUS)
    return result
