"""
Cost Accounting

Byte-exact communication accounting and convention-exact FLOP accounting per client.
Models travel as FP32 (4 bytes per parameter) and loss-vector entries as 8-byte reals,
whatever precision the simulator computes in. Sizes are reported in MiB.
"""

import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

from ..exceptions import ConfigurationError
from ..models.dm2a import (
    DM2AModel,
    ForwardMode,
    flops_per_sample,
    mode_for_alpha,
    training_flops_per_sample,
)

BYTES_PER_PARAM = 4
LOSS_ENTRY_BYTES = 8
MIB = 1024 * 1024
GFLOP = 10**9

logger = logging.getLogger(__name__)


class Algorithm(str, Enum):
    CLAD = "clad"
    LOCAL = "local"
    FEDAVG = "fedavg"
    IFCA = "ifca"
    CFL_ADS = "cfl-ads"
    CFL_ADE = "cfl-ade"

    @property
    def clustered(self) -> bool:
        return self in (Algorithm.CLAD, Algorithm.IFCA, Algorithm.CFL_ADS, Algorithm.CFL_ADE)


class Phase(str, Enum):
    INITIAL = "initial"
    TRAINING = "training"
    CLUSTERING = "clustering"
    STABILIZED = "stabilized"


class Resource(str, Enum):
    BYTES = "bytes"
    FLOPS = "flops"


def model_bytes(param_count: int) -> int:
    return int(param_count) * BYTES_PER_PARAM


def format_bytes(n_bytes: float) -> str:
    return f"{n_bytes / MIB:.3f} MB"


def round_bytes(algorithm: Algorithm, phase: Phase, K: int, size: int) -> Tuple[int, int]:
    """(download, upload) bytes one client moves in one round."""
    algorithm = Algorithm(algorithm)
    if algorithm == Algorithm.LOCAL:
        return (size, 0) if phase == Phase.INITIAL else (0, 0)
    if phase == Phase.INITIAL:
        return 0, 0
    if algorithm == Algorithm.CLAD:
        if phase == Phase.CLUSTERING:
            return K * size, size + K * LOSS_ENTRY_BYTES
        return size, size
    if algorithm == Algorithm.IFCA:
        return K * size, size
    return size, size


@dataclass
class LedgerSnapshot:
    round: int
    phase: Phase
    download: Dict[int, int]
    upload: Dict[int, int]
    flops: Dict[int, int]

    @property
    def mean_bytes(self) -> float:
        if not self.download:
            return 0.0
        return sum(self.download[c] + self.upload[c] for c in self.download) / len(self.download)

    @property
    def mean_flops(self) -> float:
        return sum(self.flops.values()) / len(self.flops) if self.flops else 0.0


@dataclass
class CostLedger:
    """Cumulative per-client costs, snapshotted at every round barrier."""

    client_ids: List[int]
    model_bytes: int
    download: Dict[int, int] = field(default_factory=dict)
    upload: Dict[int, int] = field(default_factory=dict)
    flops: Dict[int, int] = field(default_factory=dict)
    snapshots: List[LedgerSnapshot] = field(default_factory=list)

    def __post_init__(self):
        self.client_ids = sorted(self.client_ids)
        for cid in self.client_ids:
            self.download.setdefault(cid, 0)
            self.upload.setdefault(cid, 0)
            self.flops.setdefault(cid, 0)

    def charge(self, client_id: int, down: int = 0, up: int = 0, flops: int = 0) -> None:
        if down < 0 or up < 0 or flops < 0:
            raise ValueError("Ledger charges must be non-negative")
        self.download[client_id] += int(down)
        self.upload[client_id] += int(up)
        self.flops[client_id] += int(flops)

    def close_round(self, round_index: int, phase: Phase) -> LedgerSnapshot:
        snapshot = LedgerSnapshot(
            round_index, Phase(phase), dict(self.download), dict(self.upload), dict(self.flops)
        )
        self.snapshots.append(snapshot)
        return snapshot

    def total_bytes(self, client_id: int) -> int:
        return self.download[client_id] + self.upload[client_id]

    @property
    def mean_bytes(self) -> float:
        return sum(self.total_bytes(c) for c in self.client_ids) / max(1, len(self.client_ids))

    @property
    def mean_flops(self) -> float:
        return sum(self.flops.values()) / max(1, len(self.client_ids))


def record_round(
    ledger: CostLedger,
    algorithm: Algorithm,
    phase: Phase,
    K: int,
    participants: Sequence[int],
) -> CostLedger:
    """Charge every participant the round's download and upload for this algorithm/phase."""
    down, up = round_bytes(algorithm, phase, K, ledger.model_bytes)
    for cid in participants:
        ledger.charge(cid, down=down, up=up)
    return ledger


def training_flops(model: DM2AModel, alpha: float, n_samples: int, epochs: int) -> int:
    """Forward and backward work of `epochs` passes over n_samples at the client's alpha."""
    return int(epochs) * int(n_samples) * training_flops_per_sample(model, mode_for_alpha(alpha))


def fingerprint_flops(model: DM2AModel, K: int, n_benign: int) -> int:
    """Encoder + decoder inference over the benign set for each of the K models."""
    return int(K) * int(n_benign) * flops_per_sample(model, ForwardMode.RECONSTRUCTION)


def assignment_loss_flops(model: DM2AModel, K: int, n_samples: int, alpha: float) -> int:
    """Full-loss inference over the train set for each of the K models."""
    return int(K) * int(n_samples) * flops_per_sample(model, mode_for_alpha(alpha))


@dataclass(frozen=True)
class Budget:
    resource: Resource
    amount: float
    text: str

    @property
    def label(self) -> str:
        return self.text


_BUDGET_PATTERN = re.compile(r"^\s*([0-9]*\.?[0-9]+)\s*(MB|MIB|GFLOPS?|B|FLOPS?)?\s*$", re.I)


def parse_budget(text: str) -> Budget:
    """'13MB' -> 13 MiB of traffic, '20GFLOP' -> 2e10 FLOPs; a bare number is MB."""
    match = _BUDGET_PATTERN.match(str(text))
    if not match:
        raise ConfigurationError(f"Cannot parse budget '{text}'", ["use e.g. 13MB or 20GFLOP"])
    value = float(match.group(1))
    unit = (match.group(2) or "MB").upper()
    if unit in ("MB", "MIB"):
        return Budget(Resource.BYTES, value * MIB, str(text).strip())
    if unit == "B":
        return Budget(Resource.BYTES, value, str(text).strip())
    if unit.startswith("GFLOP"):
        return Budget(Resource.FLOPS, value * GFLOP, str(text).strip())
    return Budget(Resource.FLOPS, value, str(text).strip())


def last_within_budget(costs: Sequence[float], budget: float) -> int:
    """Index of the last entry whose cumulative cost fits the budget; 0 when none does."""
    chosen = 0
    for i, cost in enumerate(costs):
        if cost <= budget:
            chosen = i
        else:
            break
    return chosen


def metric_at_budget(
    logs: Sequence, ledger: CostLedger, budget: float, resource: Resource = Resource.BYTES
):
    """
    Metrics of the last completed round whose mean per-client cumulative cost fits the budget.

    logs and ledger.snapshots are aligned by round; round 0 is the fallback.
    """
    if len(logs) != len(ledger.snapshots):
        raise ValueError(
            f"{len(logs)} round logs but {len(ledger.snapshots)} ledger snapshots"
        )
    costs = [
        s.mean_bytes if Resource(resource) == Resource.BYTES else s.mean_flops
        for s in ledger.snapshots
    ]
    return logs[last_within_budget(costs, budget)]


def payload_size(model: DM2AModel, include_classifier: bool = True) -> int:
    return model_bytes(model.param_count(include_classifier))


def describe_round(snapshot: Optional[LedgerSnapshot]) -> str:
    if snapshot is None:
        return "no rounds"
    return (
        f"round {snapshot.round}: {format_bytes(snapshot.mean_bytes)}/client, "
        f"{snapshot.mean_flops / GFLOP:.3f} GFLOP/client"
    )
