"""
AdamW Optimizer

Adam with decoupled weight decay and bias correction. Parameters are handled as the
interleaved tensor list [W0, b0, W1, b1, ...] so moments line up with flatten order.
"""

from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..exceptions import ShapeError
from .layers import DenseLayer, GradientSet

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class OptimizerState:
    """Moment accumulators (None until a tensor first receives a gradient) and hyperparameters."""

    learning_rate: float = 0.01
    weight_decay: float = 1e-4
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS
    step: int = 0
    first_moment: List[Optional[np.ndarray]] = field(default_factory=list)
    second_moment: List[Optional[np.ndarray]] = field(default_factory=list)

    def __post_init__(self):
        if self.step < 0:
            raise ValueError("Optimizer step counter must be non-negative")

    def hyperparameters(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "weight_decay": self.weight_decay,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
        }


def layer_tensors(layers: Sequence[DenseLayer]) -> List[np.ndarray]:
    tensors: List[np.ndarray] = []
    for layer in layers:
        tensors.extend([layer.weights, layer.bias])
    return tensors


def adamw_step(
    params: Sequence[np.ndarray], grads: GradientSet, state: OptimizerState
) -> Tuple[List[np.ndarray], OptimizerState]:
    """
    One AdamW update.

    Args:
        params: Interleaved parameter tensors
        grads: Gradients in the same order; None entries are skipped entirely
        state: Current optimizer state

    Returns:
        New parameter tensors and the advanced optimizer state
    """
    grad_tensors = grads.tensors()
    if len(grad_tensors) != len(params):
        raise ShapeError(f"{len(grad_tensors)} gradient tensors for {len(params)} parameters")

    first = list(state.first_moment) or [None] * len(params)
    second = list(state.second_moment) or [None] * len(params)
    if len(first) != len(params) or len(second) != len(params):
        raise ShapeError("Optimizer moments do not match the parameter list")

    step = state.step + 1
    bias1 = 1.0 - state.beta1**step
    bias2 = 1.0 - state.beta2**step

    new_params: List[np.ndarray] = []
    for i, (param, grad) in enumerate(zip(params, grad_tensors)):
        if grad is None:
            new_params.append(param)
            continue
        if grad.shape != param.shape:
            raise ShapeError(f"Gradient shape {grad.shape} != parameter shape {param.shape}")
        m = first[i] if first[i] is not None else np.zeros_like(param)
        v = second[i] if second[i] is not None else np.zeros_like(param)
        if m.shape != param.shape:
            raise ShapeError("Optimizer moment shape does not match its parameter")

        decayed = param * (1.0 - state.learning_rate * state.weight_decay)
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        m_hat = m / bias1
        v_hat = v / bias2
        new_params.append(decayed - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps))
        first[i], second[i] = m, v

    return new_params, replace(state, step=step, first_moment=first, second_moment=second)


def apply_to_layers(
    layers: Sequence[DenseLayer], tensors: Sequence[np.ndarray]
) -> List[DenseLayer]:
    """Rebuild a layer list from interleaved tensors."""
    if len(tensors) != 2 * len(layers):
        raise ShapeError("Tensor count does not match the layer list")
    return [
        DenseLayer(tensors[2 * i], tensors[2 * i + 1], layer.activation)
        for i, layer in enumerate(layers)
    ]
