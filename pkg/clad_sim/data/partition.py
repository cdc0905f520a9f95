"""
Client Partitioning

Derives federated clients from device pools. Every client of a device draws from that
device's pool only, without replacement across clients, so clients of one device are
homogeneous and disjoint. Each client's draw is then split 50:50 into train and test,
and a slice of the benign training samples is held out as the threshold-calibration set.
"""

import logging
from dataclasses import asdict, dataclass, replace
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from ..exceptions import ConfigurationError, InsufficientSamplesError
from ..utils.seeding import (
    STREAM_DIRICHLET,
    STREAM_SAMPLE,
    STREAM_SPLIT,
    STREAM_UNLABELED,
    rng_for,
)
from .dataset import Dataset, benign_subset, split_train_test

logger = logging.getLogger(__name__)


class PartitionMode(str, Enum):
    IID = "iid"
    DIRICHLET = "dirichlet"
    PASSTHROUGH = "passthrough"


@dataclass
class PartitionSpec:
    """How clients are carved out of each device pool."""

    clients_per_device: int = 5
    samples_per_client: int = 1000
    benign_fraction: float = 0.5
    dirichlet_beta: Optional[float] = None
    unlabeled_fraction: float = 0.0
    seed: int = 0
    mode: Optional[PartitionMode] = None
    train_ratio: float = 0.5
    benign_val_fraction: float = 0.2

    def __post_init__(self):
        if self.mode is None:
            iid = self.dirichlet_beta is None
            self.mode = PartitionMode.IID if iid else PartitionMode.DIRICHLET
        else:
            self.mode = PartitionMode(self.mode)

    def problems(self) -> List[str]:
        issues = []
        if self.clients_per_device < 1:
            issues.append(f"clients_per_device must be at least 1 (got {self.clients_per_device})")
        if self.samples_per_client < 1:
            issues.append(f"samples_per_client must be at least 1 (got {self.samples_per_client})")
        if not 0.0 < self.benign_fraction < 1.0:
            issues.append(f"benign_fraction must lie in (0, 1) (got {self.benign_fraction})")
        if self.mode == PartitionMode.DIRICHLET:
            if self.dirichlet_beta is None or not self.dirichlet_beta > 0:
                issues.append(f"dirichlet_beta must be positive (got {self.dirichlet_beta})")
        if not 0.0 <= self.unlabeled_fraction <= 1.0:
            issues.append(f"unlabeled_fraction must lie in [0, 1] (got {self.unlabeled_fraction})")
        if not 0.0 < self.train_ratio < 1.0:
            issues.append(f"train_ratio must lie in (0, 1) (got {self.train_ratio})")
        if not 0.0 <= self.benign_val_fraction < 1.0:
            issues.append(
                f"benign_val_fraction must lie in [0, 1) (got {self.benign_val_fraction})"
            )
        return issues

    def validate(self) -> None:
        issues = self.problems()
        if issues:
            raise ConfigurationError("Invalid partition spec", issues)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["mode"] = self.mode.value
        return data


@dataclass(frozen=True)
class ClientDataset:
    """One participant's private data. device_id is ground truth, never shown to the server."""

    client_id: int
    device_id: int
    train: Dataset
    test: Dataset
    benign_val: Dataset
    labeled: bool = True
    alpha: float = 0.8

    @property
    def label(self) -> str:
        return f"d{self.device_id}-c{self.client_id}"

    @property
    def train_benign(self) -> Dataset:
        return benign_subset(self.train)

    @property
    def num_train(self) -> int:
        return len(self.train)

    def all_indices(self) -> np.ndarray:
        return np.concatenate([self.train.indices, self.test.indices, self.benign_val.indices])


def largest_remainder(proportions: Sequence[float], total: int) -> np.ndarray:
    """Integer counts summing to total, proportional to proportions; ties go to the lowest index."""
    p = np.asarray(proportions, dtype=np.float64)
    p = p / p.sum()
    exact = p * total
    counts = np.floor(exact).astype(np.int64)
    remainders = exact - counts
    order = sorted(range(len(p)), key=lambda c: (-remainders[c], c))
    for c in order[: total - int(counts.sum())]:
        counts[c] += 1
    return counts


def _iid_class_counts(n: int, benign_fraction: float, class_count: int) -> np.ndarray:
    benign = int(np.floor(benign_fraction * n + 0.5))
    attacks = class_count - 1
    counts = np.zeros(class_count, dtype=np.int64)
    counts[0] = benign
    if attacks:
        counts[1:] = largest_remainder(np.ones(attacks), n - benign)
    else:
        counts[0] = n
    return counts


def _iid_shortfall(needed: np.ndarray, available: np.ndarray) -> Dict[int, int]:
    short = np.flatnonzero(needed > available)
    return {int(c): int(needed[c] - available[c]) for c in short}


def sample_shortfall(spec: PartitionSpec, class_counts: Sequence[int]) -> Dict[int, int]:
    """
    Per-class samples a device with class_counts lacks for spec; empty when it suffices.

    IID clients need their exact class mix; Dirichlet clients only need enough samples in
    total, reported under class -1. Passthrough takes the pool as found.
    """
    available = np.asarray(class_counts, dtype=np.int64)
    m, n = spec.clients_per_device, spec.samples_per_client
    if spec.mode == PartitionMode.IID:
        per_client = _iid_class_counts(n, spec.benign_fraction, available.size)
        return _iid_shortfall(per_client * m, available)
    if spec.mode == PartitionMode.DIRICHLET and m * n > available.sum():
        return {-1: int(m * n - available.sum())}
    return {}


def _finalize_client(
    draw: Dataset,
    client_id: int,
    device_id: int,
    local_index: int,
    spec: PartitionSpec,
    alpha: float,
) -> ClientDataset:
    """Train/test split followed by the benign validation carve-out."""
    rng = rng_for(spec.seed, device_id, local_index, STREAM_SPLIT)
    train, test = split_train_test(draw, spec.train_ratio, rng, strict=False)

    benign_positions = train.positions_of(0)
    n_benign = benign_positions.size
    n_val = 0
    if n_benign >= 2 and spec.benign_val_fraction > 0.0:
        n_val = max(1, int(np.floor(spec.benign_val_fraction * n_benign + 0.5)))
    val_positions = np.sort(rng.choice(benign_positions, size=n_val, replace=False))
    keep = np.setdiff1d(np.arange(len(train)), val_positions)
    return ClientDataset(
        client_id=client_id,
        device_id=device_id,
        train=train.subset(keep),
        test=test,
        benign_val=train.subset(val_positions),
        labeled=True,
        alpha=alpha,
    )


def derive_clients(
    device: Dataset,
    spec: PartitionSpec,
    device_id: int = 0,
    first_client_id: int = 0,
    alpha: float = 0.8,
) -> List[ClientDataset]:
    """
    IID clients at a fixed class mix.

    Each client gets samples_per_client samples: round(benign_fraction * n) benign and
    the rest split equally over the attack classes. Per-class pools are shuffled once
    and sliced consecutively, so no sample reaches two clients.
    """
    m = spec.clients_per_device
    classes = range(device.class_count)
    per_client = _iid_class_counts(
        spec.samples_per_client, spec.benign_fraction, device.class_count
    )
    shortfall = _iid_shortfall(per_client * m, device.class_counts())
    if shortfall:
        raise InsufficientSamplesError(device_id, shortfall)

    rng = rng_for(spec.seed, device_id, STREAM_SAMPLE)
    pools = [rng.permutation(device.positions_of(c)) for c in classes]
    clients = []
    for j in range(m):
        picks = [pools[c][j * per_client[c] : (j + 1) * per_client[c]] for c in classes]
        draw = device.subset(np.sort(np.concatenate(picks)))
        clients.append(_finalize_client(draw, first_client_id + j, device_id, j, spec, alpha))
    logger.debug(f"Device {device_id}: {m} IID clients, class mix {per_client.tolist()}")
    return clients


def _dirichlet_counts(
    proportions: np.ndarray, n: int, remaining: np.ndarray, device_id: int
) -> np.ndarray:
    """Target counts for one client, moving mass off exhausted classes proportionally."""
    take = np.minimum(largest_remainder(proportions, n), remaining)
    deficit = n - int(take.sum())
    while deficit > 0:
        spare = remaining - take
        open_classes = np.flatnonzero(spare > 0)
        if open_classes.size == 0:
            raise InsufficientSamplesError(device_id, {-1: deficit})
        weights = proportions[open_classes]
        if weights.sum() <= 0:
            weights = np.ones(open_classes.size)
        extra = np.minimum(largest_remainder(weights, deficit), spare[open_classes])
        take[open_classes] += extra
        deficit = n - int(take.sum())
    return take


def dirichlet_partition(
    device: Dataset,
    beta: float,
    m: int,
    n: int,
    seed: int,
    device_id: int = 0,
    first_client_id: int = 0,
    alpha: float = 0.8,
    spec: Optional[PartitionSpec] = None,
) -> List[ClientDataset]:
    """
    Non-IID clients whose class proportions follow a symmetric Dirichlet(beta).

    Counts use largest-remainder rounding so every client holds exactly n samples.
    """
    if not beta > 0:
        raise ConfigurationError(f"dirichlet_beta must be positive (got {beta})")
    if m * n > len(device):
        raise InsufficientSamplesError(device_id, {-1: m * n - len(device)})
    spec = spec or PartitionSpec(
        clients_per_device=m, samples_per_client=n, dirichlet_beta=beta, seed=seed
    )
    rng = rng_for(seed, device_id, STREAM_DIRICHLET)
    pools = [rng.permutation(device.positions_of(c)) for c in range(device.class_count)]
    cursor = np.zeros(device.class_count, dtype=np.int64)
    remaining = device.class_counts().astype(np.int64)

    clients = []
    for j in range(m):
        proportions = rng.dirichlet(np.full(device.class_count, float(beta)))
        if not np.all(np.isfinite(proportions)) or proportions.sum() <= 0:
            proportions = np.zeros(device.class_count)
            proportions[rng.integers(device.class_count)] = 1.0
        take = _dirichlet_counts(proportions, n, remaining, device_id)
        picks = []
        for c in range(device.class_count):
            picks.append(pools[c][cursor[c] : cursor[c] + take[c]])
            cursor[c] += take[c]
        remaining -= take
        draw = device.subset(np.sort(np.concatenate(picks)))
        clients.append(_finalize_client(draw, first_client_id + j, device_id, j, spec, alpha))
        logger.debug(f"Device {device_id} client {j}: Dirichlet counts {take.tolist()}")
    return clients


def passthrough_clients(
    device: Dataset,
    device_id: int,
    seed: int,
    client_id: int = 0,
    alpha: float = 0.8,
    spec: Optional[PartitionSpec] = None,
) -> List[ClientDataset]:
    """One client holding the whole device pool, class mix as found."""
    spec = spec or PartitionSpec(mode=PartitionMode.PASSTHROUGH, seed=seed)
    return [_finalize_client(device, client_id, device_id, 0, spec, alpha)]


def mark_unlabeled(
    clients: Sequence[ClientDataset], fraction: float, seed: int
) -> List[ClientDataset]:
    """
    Withhold training labels from round(fraction * N) clients.

    Selection is stratified across devices. A selected client keeps only the benign
    part of its train set and trains with alpha = 0; its test set keeps full labels.
    """
    clients = list(clients)
    total = int(np.floor(fraction * len(clients) + 0.5))
    if total == 0:
        return clients

    by_device: Dict[int, List[int]] = {}
    for pos, client in enumerate(clients):
        by_device.setdefault(client.device_id, []).append(pos)
    devices = sorted(by_device)
    sizes = np.array([len(by_device[d]) for d in devices], dtype=np.float64)
    quotas = np.minimum(largest_remainder(sizes, total), sizes.astype(np.int64))

    rng = rng_for(seed, STREAM_UNLABELED)
    selected = set()
    for device, quota in zip(devices, quotas):
        members = rng.permutation(by_device[device])
        selected.update(int(p) for p in members[:quota])

    result = []
    for pos, client in enumerate(clients):
        if pos in selected:
            client = replace(client, train=benign_subset(client.train), labeled=False, alpha=0.0)
        result.append(client)
    logger.info(f"Marked {len(selected)}/{len(clients)} clients unlabeled")
    return result


def build_population(
    devices: Sequence[Dataset], spec: PartitionSpec, alpha: float = 0.8
) -> List[ClientDataset]:
    """All clients over all devices; client ids are consecutive in device order."""
    spec.validate()
    clients: List[ClientDataset] = []
    for device_id, device in enumerate(devices):
        first = len(clients)
        if spec.mode == PartitionMode.IID:
            clients.extend(derive_clients(device, spec, device_id, first, alpha))
        elif spec.mode == PartitionMode.DIRICHLET:
            clients.extend(
                dirichlet_partition(
                    device,
                    spec.dirichlet_beta,
                    spec.clients_per_device,
                    spec.samples_per_client,
                    spec.seed,
                    device_id,
                    first,
                    alpha,
                    spec,
                )
            )
        else:
            clients.extend(passthrough_clients(device, device_id, spec.seed, first, alpha, spec))
    return mark_unlabeled(clients, spec.unlabeled_fraction, spec.seed)


def check_sample_budget(devices: Sequence[Dataset], specs: Sequence[PartitionSpec]) -> None:
    """Raise InsufficientSamplesError for the first device that cannot serve every spec."""
    for spec in specs:
        for device_id, device in enumerate(devices):
            shortfall = sample_shortfall(spec, device.class_counts())
            if shortfall:
                raise InsufficientSamplesError(device_id, shortfall)
