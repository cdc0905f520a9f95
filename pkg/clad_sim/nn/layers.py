"""
Dense Layer Kernel

Matrices are 2-D float64 numpy arrays (rows = samples). A layer stack is a plain list of
DenseLayer objects; forward() returns the output together with the per-layer caches that
backward() needs.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import erf

from ..exceptions import ConfigurationError, ShapeError

Matrix = np.ndarray

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)

logger = logging.getLogger(__name__)


class Activation(str, Enum):
    """Activation applied after the affine map of a dense layer."""

    GELU = "gelu"
    IDENTITY = "identity"
    # Logits layers: softmax is folded into the cross-entropy loss.
    SOFTMAX_AT_LOSS = "softmax_at_loss"


def gelu(x):
    """Exact GELU, x * Phi(x), using the erf form of the normal CDF."""
    x = np.asarray(x, dtype=np.float64)
    result = 0.5 * x * (1.0 + erf(x / _SQRT2))
    return float(result) if result.ndim == 0 else result


def gelu_grad(x: np.ndarray) -> np.ndarray:
    """Derivative of exact GELU: Phi(x) + x * phi(x)."""
    cdf = 0.5 * (1.0 + erf(x / _SQRT2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return cdf + x * pdf


@dataclass
class DenseLayer:
    """Fully connected layer: weights are (out x in), bias is (out,)."""

    weights: np.ndarray
    bias: np.ndarray
    activation: Activation = Activation.IDENTITY

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.ndim != 1:
            raise ShapeError("DenseLayer expects 2-D weights and a 1-D bias")
        if self.bias.shape[0] != self.weights.shape[0]:
            raise ShapeError(
                f"Bias length {self.bias.shape[0]} does not match {self.weights.shape[0]} outputs"
            )
        self.activation = Activation(self.activation)

    @property
    def in_dim(self) -> int:
        return int(self.weights.shape[1])

    @property
    def out_dim(self) -> int:
        return int(self.weights.shape[0])

    @property
    def is_hidden(self) -> bool:
        return self.activation == Activation.GELU

    def copy(self) -> "DenseLayer":
        return DenseLayer(self.weights.copy(), self.bias.copy(), self.activation)


@dataclass
class LayerCache:
    """What backward() needs from one layer's forward pass."""

    inputs: np.ndarray
    pre_activation: np.ndarray
    dropout_mask: Optional[np.ndarray] = None


@dataclass
class GradientSet:
    """
    Per-layer weight and bias gradients, in the same order as the owning layer list.

    A None entry means no gradient flowed into that layer (its branch was not part of
    the loss); the optimizer leaves such layers untouched.
    """

    weights: List[Optional[np.ndarray]] = field(default_factory=list)
    biases: List[Optional[np.ndarray]] = field(default_factory=list)

    @classmethod
    def zeros_like(cls, layers: Sequence[DenseLayer]) -> "GradientSet":
        return cls(
            weights=[np.zeros_like(layer.weights) for layer in layers],
            biases=[np.zeros_like(layer.bias) for layer in layers],
        )

    @classmethod
    def absent(cls, layers: Sequence[DenseLayer]) -> "GradientSet":
        return cls(weights=[None] * len(layers), biases=[None] * len(layers))

    def __add__(self, other: "GradientSet") -> "GradientSet":
        return GradientSet(self.weights + other.weights, self.biases + other.biases)

    def tensors(self) -> List[Optional[np.ndarray]]:
        """Interleaved [dW0, db0, dW1, db1, ...], matching flatten order."""
        out: List[Optional[np.ndarray]] = []
        for dw, db in zip(self.weights, self.biases):
            out.extend([dw, db])
        return out

    def is_zero(self) -> bool:
        return all(t is None or not np.any(t) for t in self.tensors())

    def check_against(self, layers: Sequence[DenseLayer]) -> None:
        if len(self.weights) != len(layers) or len(self.biases) != len(layers):
            raise ShapeError("GradientSet layer count does not match the model")
        for layer, dw, db in zip(layers, self.weights, self.biases):
            if dw is not None and dw.shape != layer.weights.shape:
                raise ShapeError(f"Weight gradient {dw.shape} != {layer.weights.shape}")
            if db is not None and db.shape != layer.bias.shape:
                raise ShapeError(f"Bias gradient {db.shape} != {layer.bias.shape}")


def init_dense(
    in_dim: int, out_dim: int, activation: Activation, rng: np.random.Generator
) -> DenseLayer:
    """Uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) initialisation for weights and bias."""
    bound = np.sqrt(1.0 / in_dim)
    weights = rng.uniform(-bound, bound, size=(out_dim, in_dim))
    bias = rng.uniform(-bound, bound, size=out_dim)
    return DenseLayer(weights, bias, activation)


def forward(
    layers: Sequence[DenseLayer],
    inputs: Matrix,
    training: bool = False,
    dropout_p: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[Matrix, List[LayerCache]]:
    """
    Run a layer stack.

    Dropout (inverted scaling) follows every hidden layer, only when training.

    Returns:
        Output matrix and the per-layer caches for backward()
    """
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2:
        raise ConfigurationError(f"Expected a 2-D input matrix, got {x.ndim} dimension(s)")
    if layers and x.shape[1] != layers[0].in_dim:
        raise ConfigurationError(
            f"Input has {x.shape[1]} columns but the first layer expects {layers[0].in_dim}"
        )

    use_dropout = training and dropout_p > 0.0
    if use_dropout and rng is None:
        raise ConfigurationError("Dropout during training needs a random generator")
    keep = 1.0 - dropout_p

    caches: List[LayerCache] = []
    for layer in layers:
        pre = x @ layer.weights.T + layer.bias
        mask = None
        if layer.activation == Activation.GELU:
            out = gelu(pre) if pre.size else pre.copy()
            if use_dropout:
                mask = (rng.random(out.shape) < keep).astype(np.float64) / keep
                out = out * mask
        else:
            out = pre
        caches.append(LayerCache(inputs=x, pre_activation=pre, dropout_mask=mask))
        x = out
    return x, caches


def backward(
    layers: Sequence[DenseLayer],
    caches: Optional[Sequence[LayerCache]],
    grad_output: Matrix,
) -> Tuple[GradientSet, Matrix]:
    """
    Backpropagate a loss gradient through a layer stack.

    Args:
        layers: The stack that produced the caches
        caches: Caches from forward() on the same batch
        grad_output: dLoss/dOutput of the stack

    Returns:
        GradientSet for the stack and dLoss/dInput
    """
    if caches is None or len(caches) != len(layers):
        raise ShapeError("backward() needs the caches of a forward pass over the same layers")

    grad = np.asarray(grad_output, dtype=np.float64)
    weight_grads: List[np.ndarray] = [None] * len(layers)  # type: ignore[list-item]
    bias_grads: List[np.ndarray] = [None] * len(layers)  # type: ignore[list-item]

    for idx in range(len(layers) - 1, -1, -1):
        layer, cache = layers[idx], caches[idx]
        if grad.shape != cache.pre_activation.shape:
            raise ShapeError(
                f"Gradient shape {grad.shape} != layer output {cache.pre_activation.shape}"
            )
        if layer.activation == Activation.GELU:
            if cache.dropout_mask is not None:
                grad = grad * cache.dropout_mask
            grad = grad * gelu_grad(cache.pre_activation)
        weight_grads[idx] = grad.T @ cache.inputs
        bias_grads[idx] = grad.sum(axis=0)
        grad = grad @ layer.weights

    return GradientSet(weights=weight_grads, biases=bias_grads), grad


def softmax(logits: Matrix) -> Matrix:
    """Row-wise softmax, shifted by the row maximum for stability."""
    z = np.asarray(logits, dtype=np.float64)
    shifted = z - z.max(axis=1, keepdims=True)
    exps = np.exp(shifted)
    return exps / exps.sum(axis=1, keepdims=True)


def dense_forward_flops(layer: DenseLayer) -> int:
    """2*in*out + out for the affine map, plus one per output element of a hidden layer."""
    flops = 2 * layer.in_dim * layer.out_dim + layer.out_dim
    if layer.is_hidden:
        flops += layer.out_dim
    return flops


def stack_forward_flops(layers: Sequence[DenseLayer]) -> int:
    return sum(dense_forward_flops(layer) for layer in layers)
