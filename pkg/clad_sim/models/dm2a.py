"""
Dual-Mode Micro-Architecture (DM2A)

A shared encoder E_phi feeds two heads: a mirrored decoder D_psi (reconstruction,
unsupervised mode) and a small classifier C_theta (attack identification, supervised
mode). Training minimises alpha * CE + (1 - alpha) * MSE; alpha = 0 is pure anomaly
detection.

Class index 0 is always the benign class.
"""

import logging
from dataclasses import asdict, dataclass
from enum import Enum, IntEnum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..exceptions import ConfigurationError, FingerprintError
from ..nn.layers import (
    Activation,
    DenseLayer,
    GradientSet,
    LayerCache,
    Matrix,
    backward,
    forward,
    init_dense,
    stack_forward_flops,
)
from ..nn.losses import (
    cross_entropy,
    cross_entropy_grad,
    mse_grad,
    mse_loss,
    per_sample_squared_error,
)
from ..nn.serialization import (
    LayerShape,
    flatten,
    load_checkpoint,
    param_count,
    save_checkpoint,
    unflatten,
)

BENIGN_CLASS = 0

logger = logging.getLogger(__name__)


class ForwardMode(str, Enum):
    """Which branches a pass evaluates."""

    RECONSTRUCTION = "reconstruction"
    DUAL = "dual"
    CLASSIFICATION = "classification"


class AnomalyStatus(IntEnum):
    NORMAL = 0
    ANOMALOUS = 1


@dataclass
class DM2AConfig:
    """Topology and mode defaults of a DM2A model."""

    input_dim: int
    encoder_widths: Tuple[int, ...]
    num_classes: int
    classifier_hidden: Optional[int] = None
    dropout_p: float = 0.2
    alpha_default: float = 0.8

    def __post_init__(self):
        self.encoder_widths = tuple(int(w) for w in self.encoder_widths)
        if self.classifier_hidden is None and self.encoder_widths:
            self.classifier_hidden = self.encoder_widths[-1] // 2
        self.validate()

    @property
    def latent_dim(self) -> int:
        return self.encoder_widths[-1]

    def problems(self) -> List[str]:
        issues = []
        if self.input_dim < 1:
            issues.append(f"input_dim must be positive (got {self.input_dim})")
        if not self.encoder_widths:
            issues.append("encoder_widths must list at least the latent width")
        elif any(w < 1 for w in self.encoder_widths):
            issues.append(f"encoder_widths must be strictly positive (got {self.encoder_widths})")
        elif self.latent_dim >= self.input_dim:
            issues.append(
                f"latent width {self.latent_dim} must be smaller than input_dim {self.input_dim}"
            )
        elif self.classifier_hidden != self.latent_dim // 2 or self.classifier_hidden < 1:
            issues.append(
                f"classifier_hidden must be latent_dim // 2 = {self.latent_dim // 2} "
                f"(got {self.classifier_hidden})"
            )
        if self.num_classes < 2:
            issues.append(f"num_classes must be at least 2 (got {self.num_classes})")
        if not 0.0 <= self.dropout_p < 1.0:
            issues.append(f"dropout_p must lie in [0, 1) (got {self.dropout_p})")
        if not 0.0 <= self.alpha_default <= 1.0:
            issues.append(f"alpha_default must lie in [0, 1] (got {self.alpha_default})")
        return issues

    def validate(self) -> None:
        issues = self.problems()
        if issues:
            raise ConfigurationError("Invalid DM2A configuration", issues)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["encoder_widths"] = list(self.encoder_widths)
        return data


# Topologies used for the three reference datasets (feature count, encoder widths, classes).
_PRESETS = {
    "cic": (110, (96, 48, 24), 7),
    "gotham": (68, (64, 32, 16), 6),
    "unsw": (138, (96, 48, 24), 4),
}


def dm2a_preset(name: str, num_classes: Optional[int] = None, **overrides) -> DM2AConfig:
    key = name.lower()
    if key not in _PRESETS:
        raise ConfigurationError(
            f"Unknown model preset '{name}'", [f"choose one of {sorted(_PRESETS)}"]
        )
    input_dim, widths, classes = _PRESETS[key]
    params = {
        "input_dim": input_dim,
        "encoder_widths": widths,
        "num_classes": num_classes or classes,
    }
    params.update(overrides)
    return DM2AConfig(**params)


@dataclass
class DM2AModel:
    """Encoder (phi), mirrored decoder (psi) and classifier (theta) layer stacks."""

    config: DM2AConfig
    encoder: List[DenseLayer]
    decoder: List[DenseLayer]
    classifier: List[DenseLayer]

    @property
    def layers(self) -> List[DenseLayer]:
        """All layers in flatten order: encoder, decoder, classifier."""
        return [*self.encoder, *self.decoder, *self.classifier]

    def copy(self) -> "DM2AModel":
        return DM2AModel(
            self.config,
            [layer.copy() for layer in self.encoder],
            [layer.copy() for layer in self.decoder],
            [layer.copy() for layer in self.classifier],
        )

    def flatten(self) -> np.ndarray:
        return flatten(self.layers)

    def param_count(self, include_classifier: bool = True) -> int:
        stacks = self.layers if include_classifier else [*self.encoder, *self.decoder]
        return param_count(stacks)

    def with_layers(self, layers: Sequence[DenseLayer]) -> "DM2AModel":
        n_enc, n_dec = len(self.encoder), len(self.decoder)
        layers = list(layers)
        return DM2AModel(
            self.config, layers[:n_enc], layers[n_enc : n_enc + n_dec], layers[n_enc + n_dec :]
        )

    def with_vector(self, vector: np.ndarray) -> "DM2AModel":
        return self.with_layers(unflatten(vector, model_shape_spec(self.config)))


def _encoder_dims(config: DM2AConfig) -> List[int]:
    return [config.input_dim, *config.encoder_widths]


def model_shape_spec(config: DM2AConfig) -> Tuple[LayerShape, ...]:
    """Shape-spec of the full model in flatten order."""
    enc_dims = _encoder_dims(config)
    dec_dims = list(reversed(enc_dims))
    shapes: List[LayerShape] = []
    for i in range(len(enc_dims) - 1):
        shapes.append(LayerShape(enc_dims[i], enc_dims[i + 1], Activation.GELU))
    for i in range(len(dec_dims) - 1):
        last = i == len(dec_dims) - 2
        shapes.append(
            LayerShape(
                dec_dims[i], dec_dims[i + 1], Activation.IDENTITY if last else Activation.GELU
            )
        )
    shapes.append(LayerShape(config.latent_dim, config.classifier_hidden, Activation.GELU))
    shapes.append(
        LayerShape(config.classifier_hidden, config.num_classes, Activation.SOFTMAX_AT_LOSS)
    )
    return tuple(shapes)


def build_model(config: DM2AConfig, seed: Union[int, np.random.Generator]) -> DM2AModel:
    """Seeded DM2A instance; the decoder mirrors the encoder widths."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    layers = [init_dense(s.in_dim, s.out_dim, s.activation, rng) for s in model_shape_spec(config)]
    n_enc = len(config.encoder_widths)
    return DM2AModel(config, layers[:n_enc], layers[n_enc : 2 * n_enc], layers[2 * n_enc :])


@dataclass
class DualOutput:
    x_hat: Optional[Matrix]
    logits: Optional[Matrix]
    z: Matrix


@dataclass
class DualCache:
    encoder: List[LayerCache]
    decoder: Optional[List[LayerCache]] = None
    classifier: Optional[List[LayerCache]] = None


def _forward_cached(
    model: DM2AModel,
    x: Matrix,
    training: bool,
    rng: Optional[np.random.Generator],
    mode: ForwardMode = ForwardMode.DUAL,
) -> Tuple[DualOutput, DualCache]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.config.input_dim:
        raise ConfigurationError(
            f"Input must have {model.config.input_dim} columns (got shape {x.shape})"
        )
    p = model.config.dropout_p
    z, enc_cache = forward(model.encoder, x, training=training, dropout_p=p, rng=rng)
    out = DualOutput(x_hat=None, logits=None, z=z)
    cache = DualCache(encoder=enc_cache)
    if mode in (ForwardMode.RECONSTRUCTION, ForwardMode.DUAL):
        out.x_hat, cache.decoder = forward(
            model.decoder, z, training=training, dropout_p=p, rng=rng
        )
    if mode in (ForwardMode.CLASSIFICATION, ForwardMode.DUAL):
        out.logits, cache.classifier = forward(
            model.classifier, z, training=training, dropout_p=p, rng=rng
        )
    return out, cache


def forward_dual(
    model: DM2AModel,
    x: Matrix,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> DualOutput:
    """z = E(x); x_hat = D(z); logits = C(z). Dropout only when training."""
    out, _ = _forward_cached(model, x, training, rng)
    return out


def composite_loss(x: Matrix, out: DualOutput, y, alpha: float) -> float:
    """
    alpha * CE(y, logits) + (1 - alpha) * MSE(x, x_hat).

    The CE term is skipped at alpha = 0 and the MSE term at alpha = 1.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ConfigurationError(f"alpha must lie in [0, 1] (got {alpha})")
    if alpha > 0.0 and y is None:
        raise ConfigurationError(
            "alpha > 0 needs labels; unlabeled clients must train with alpha = 0"
        )
    if alpha == 0.0:
        return mse_loss(x, out.x_hat)
    if alpha == 1.0:
        return cross_entropy(out.logits, y)
    return alpha * cross_entropy(out.logits, y) + (1.0 - alpha) * mse_loss(x, out.x_hat)


def mode_for_alpha(alpha: float) -> ForwardMode:
    if alpha == 0.0:
        return ForwardMode.RECONSTRUCTION
    if alpha == 1.0:
        return ForwardMode.CLASSIFICATION
    return ForwardMode.DUAL


def composite_gradients(
    model: DM2AModel,
    x: Matrix,
    y,
    alpha: float,
    rng: Optional[np.random.Generator] = None,
    training: bool = True,
) -> Tuple[float, GradientSet]:
    """
    One forward/backward pass of the composite loss.

    Branches that do not enter the loss (classifier at alpha = 0, decoder at alpha = 1)
    are not evaluated and receive no gradient.

    Returns:
        The loss value and gradients in model.layers order
    """
    mode = mode_for_alpha(alpha)
    out, cache = _forward_cached(model, x, training, rng, mode)
    loss = composite_loss(x, out, y, alpha)

    grad_z = np.zeros_like(out.z)
    if cache.decoder is not None:
        seed = (1.0 - alpha) * mse_grad(x, out.x_hat)
        dec_grads, g = backward(model.decoder, cache.decoder, seed)
        grad_z = grad_z + g
    else:
        dec_grads = GradientSet.absent(model.decoder)
    if cache.classifier is not None:
        seed = alpha * cross_entropy_grad(out.logits, y)
        cls_grads, g = backward(model.classifier, cache.classifier, seed)
        grad_z = grad_z + g
    else:
        cls_grads = GradientSet.absent(model.classifier)

    enc_grads, _ = backward(model.encoder, cache.encoder, grad_z)
    return loss, enc_grads + dec_grads + cls_grads


def reconstruct(model: DM2AModel, x: Matrix) -> Matrix:
    """Inference-mode D(E(x)); the classifier is never evaluated."""
    out, _ = _forward_cached(model, x, training=False, rng=None, mode=ForwardMode.RECONSTRUCTION)
    return out.x_hat


def per_sample_mse(model: DM2AModel, x: Matrix) -> np.ndarray:
    """Per-sample reconstruction error: mean over features of the squared error."""
    x = np.asarray(x, dtype=np.float64)
    return per_sample_squared_error(x, reconstruct(model, x))


def reconstruction_fingerprint(model: DM2AModel, benign: Matrix) -> float:
    """
    Loss-vector component: benign-only reconstruction MSE in inference mode.

    The classifier head stays frozen (not computed) and no parameter is touched.
    """
    benign = np.asarray(benign, dtype=np.float64)
    if benign.ndim != 2 or benign.shape[0] == 0:
        raise FingerprintError("Cannot fingerprint a client without benign samples")
    return mse_loss(benign, reconstruct(model, benign))


@dataclass(frozen=True)
class AnomalyThreshold:
    tau: float

    def __post_init__(self):
        if not self.tau >= 0.0:
            raise ValueError(f"Anomaly threshold must be non-negative (got {self.tau})")


def calibrate_threshold(model: DM2AModel, benign_val: Matrix) -> AnomalyThreshold:
    """tau_i = largest per-sample reconstruction error on the benign validation set."""
    benign_val = np.asarray(benign_val, dtype=np.float64)
    if benign_val.ndim != 2 or benign_val.shape[0] == 0:
        raise FingerprintError("Cannot calibrate a threshold on an empty validation set")
    return AnomalyThreshold(float(np.max(per_sample_mse(model, benign_val))))


def predict_logits(model: DM2AModel, x: Matrix) -> Matrix:
    out, _ = _forward_cached(model, x, training=False, rng=None, mode=ForwardMode.CLASSIFICATION)
    return out.logits


def infer_labeled(model: DM2AModel, x: Matrix) -> np.ndarray:
    """Class index per sample: argmax of the logits, lowest index on ties."""
    return np.argmax(predict_logits(model, x), axis=1)


def infer_unlabeled(model: DM2AModel, x: Matrix, tau: AnomalyThreshold) -> np.ndarray:
    """AnomalyStatus per sample: ANOMALOUS iff per-sample MSE > tau (strict)."""
    errors = per_sample_mse(model, x)
    statuses = np.where(errors > tau.tau, AnomalyStatus.ANOMALOUS, AnomalyStatus.NORMAL)
    return statuses.astype(np.int64)


def flops_per_sample(model: DM2AModel, mode: ForwardMode = ForwardMode.DUAL) -> int:
    """Forward FLOPs for one sample under the declared counting convention."""
    mode = ForwardMode(mode)
    flops = stack_forward_flops(model.encoder)
    if mode in (ForwardMode.RECONSTRUCTION, ForwardMode.DUAL):
        flops += stack_forward_flops(model.decoder)
    if mode in (ForwardMode.CLASSIFICATION, ForwardMode.DUAL):
        flops += stack_forward_flops(model.classifier)
    return flops


def training_flops_per_sample(model: DM2AModel, mode: ForwardMode = ForwardMode.DUAL) -> int:
    """Forward plus backward, the backward pass counted as twice the forward."""
    return 3 * flops_per_sample(model, mode)


def save_model(model: DM2AModel, path: Union[str, Path]) -> Path:
    return save_checkpoint(model.layers, path, metadata={"dm2a": model.config.to_dict()})


def load_model(path: Union[str, Path]) -> DM2AModel:
    layers, metadata = load_checkpoint(path)
    if "dm2a" not in metadata:
        raise ConfigurationError(f"{path} does not carry a DM2A configuration header")
    config = DM2AConfig(**metadata["dm2a"])
    expected = model_shape_spec(config)
    n_enc = len(config.encoder_widths)
    model = DM2AModel(config, layers[:n_enc], layers[n_enc : 2 * n_enc], layers[2 * n_enc :])
    if tuple(LayerShape(l.in_dim, l.out_dim, l.activation) for l in model.layers) != expected:
        raise ConfigurationError(f"{path}: layer shapes do not match the stored configuration")
    return model
