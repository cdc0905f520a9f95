"""
Parameter Flattening and Checkpoints

Flatten order is layer order, each layer's weights row-major followed by its bias.

Checkpoint byte layout:
    8 bytes   magic b"CLADCKPT"
    4 bytes   header length H, unsigned little-endian
    H bytes   UTF-8 JSON header: {"format": 1, "layers": [...], "metadata": {...}}
    8*P bytes parameters as little-endian float64, P = sum of layer sizes
"""

import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple, Union

import numpy as np

from ..exceptions import ShapeError
from .layers import Activation, DenseLayer

CHECKPOINT_MAGIC = b"CLADCKPT"
CHECKPOINT_FORMAT = 1

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LayerShape:
    in_dim: int
    out_dim: int
    activation: Activation

    @property
    def size(self) -> int:
        return self.in_dim * self.out_dim + self.out_dim

    def to_dict(self) -> Dict[str, Any]:
        return {"in": self.in_dim, "out": self.out_dim, "activation": self.activation.value}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "LayerShape":
        return cls(int(data["in"]), int(data["out"]), Activation(data["activation"]))


ShapeSpec = Tuple[LayerShape, ...]


def shape_spec(layers: Sequence[DenseLayer]) -> ShapeSpec:
    return tuple(LayerShape(layer.in_dim, layer.out_dim, layer.activation) for layer in layers)


def param_count(layers: Sequence[DenseLayer]) -> int:
    """Total scalar parameters of a layer list."""
    return sum(layer.weights.size + layer.bias.size for layer in layers)


def flatten(layers: Sequence[DenseLayer]) -> np.ndarray:
    if not layers:
        return np.zeros(0)
    parts: List[np.ndarray] = []
    for layer in layers:
        parts.append(layer.weights.ravel(order="C"))
        parts.append(layer.bias)
    return np.concatenate(parts).astype(np.float64, copy=False)


def unflatten(vector: np.ndarray, spec: Sequence[LayerShape]) -> List[DenseLayer]:
    vector = np.asarray(vector, dtype=np.float64)
    expected = sum(shape.size for shape in spec)
    if vector.ndim != 1 or vector.size != expected:
        raise ShapeError(f"Parameter vector has {vector.size} values, shape-spec needs {expected}")

    layers: List[DenseLayer] = []
    offset = 0
    for shape in spec:
        n_w = shape.in_dim * shape.out_dim
        weights = vector[offset : offset + n_w].reshape(shape.out_dim, shape.in_dim).copy()
        offset += n_w
        bias = vector[offset : offset + shape.out_dim].copy()
        offset += shape.out_dim
        layers.append(DenseLayer(weights, bias, shape.activation))
    return layers


def save_checkpoint(
    layers: Sequence[DenseLayer], path: Union[str, Path], metadata: Dict[str, Any] = None
) -> Path:
    path = Path(path)
    header = {
        "format": CHECKPOINT_FORMAT,
        "layers": [shape.to_dict() for shape in shape_spec(layers)],
        "metadata": metadata or {},
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = flatten(layers).astype("<f8").tobytes()

    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(header_bytes)))
        f.write(header_bytes)
        f.write(payload)

    logger.debug(f"Saved checkpoint: {path} ({len(payload)} parameter bytes)")
    return path


def load_checkpoint(path: Union[str, Path]) -> Tuple[List[DenseLayer], Dict[str, Any]]:
    """
    Read a checkpoint written by save_checkpoint().

    Returns:
        The layer list and the metadata block of the header
    """
    raw = Path(path).read_bytes()
    if raw[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise ShapeError(f"{path} is not a CLAD checkpoint")
    offset = len(CHECKPOINT_MAGIC)
    (header_len,) = struct.unpack("<I", raw[offset : offset + 4])
    offset += 4
    header = json.loads(raw[offset : offset + header_len].decode("utf-8"))
    offset += header_len

    spec = tuple(LayerShape.from_dict(entry) for entry in header["layers"])
    expected = 8 * sum(shape.size for shape in spec)
    if len(raw) - offset != expected:
        raise ShapeError(f"{path}: expected {expected} parameter bytes, found {len(raw) - offset}")

    vector = np.frombuffer(raw[offset:], dtype="<f8").astype(np.float64)
    return unflatten(vector, spec), header.get("metadata", {})
