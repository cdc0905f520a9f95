"""Minimal dense-network kernel: layers, losses, backpropagation, AdamW, serialization."""

from .layers import (
    Activation,
    DenseLayer,
    GradientSet,
    LayerCache,
    backward,
    forward,
    gelu,
    init_dense,
    softmax,
)
from .losses import cross_entropy, mse_loss, per_sample_squared_error
from .optim import OptimizerState, adamw_step
from .serialization import (
    LayerShape,
    flatten,
    load_checkpoint,
    param_count,
    save_checkpoint,
    shape_spec,
    unflatten,
)

__all__ = [
    "Activation",
    "DenseLayer",
    "GradientSet",
    "LayerCache",
    "LayerShape",
    "OptimizerState",
    "adamw_step",
    "backward",
    "cross_entropy",
    "flatten",
    "forward",
    "gelu",
    "init_dense",
    "load_checkpoint",
    "mse_loss",
    "param_count",
    "per_sample_squared_error",
    "save_checkpoint",
    "shape_spec",
    "softmax",
    "unflatten",
]
