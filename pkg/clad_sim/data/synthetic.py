"""
Synthetic Device Traffic

Stands in for the ground-truth device types: each cluster k has a benign mean mu_k and
attack class a lives at mu_k + delta_{k,a} with ||delta_{k,a}|| = attack_shift. Samples
are isotropic Gaussians around those centres, clipped to [0, 1].
"""

import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from ..exceptions import ConfigurationError
from .dataset import BENIGN_LABEL, Dataset

MEAN_LOW = 0.2
MEAN_HIGH = 0.8
MAX_PLACEMENT_ATTEMPTS = 10_000

logger = logging.getLogger(__name__)


@dataclass
class SyntheticSpec:
    """
    Parameters of the multi-cluster generator.

    conflicting_attacks rotates the shared attack directions per cluster, so attack
    class a of cluster k moves along the direction class (a + k) mod A uses elsewhere.
    """

    num_clusters: int
    feature_dim: int
    attack_classes: int
    cluster_separation: float
    intra_noise: float
    attack_shift: float
    seed: int = 0
    samples_per_class: int = 1000
    conflicting_attacks: bool = False
    class_names: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        if self.class_names is not None:
            self.class_names = tuple(self.class_names)

    @property
    def num_classes(self) -> int:
        return self.attack_classes + 1

    def resolved_class_names(self) -> Tuple[str, ...]:
        if self.class_names is not None:
            return self.class_names
        return (BENIGN_LABEL, *(f"attack_{a}" for a in range(1, self.attack_classes + 1)))

    def problems(self) -> List[str]:
        issues = []
        if self.num_clusters < 1:
            issues.append(f"num_clusters must be at least 1 (got {self.num_clusters})")
        if self.feature_dim < 1:
            issues.append(f"feature_dim must be positive (got {self.feature_dim})")
        if self.attack_classes < 1:
            issues.append(f"attack_classes must be at least 1 (got {self.attack_classes})")
        if self.attack_classes > self.feature_dim:
            issues.append("attack_classes cannot exceed feature_dim (directions are orthonormal)")
        if not self.cluster_separation > 0:
            issues.append(f"cluster_separation must be positive (got {self.cluster_separation})")
        if self.intra_noise < 0:
            issues.append(f"intra_noise must be non-negative (got {self.intra_noise})")
        if self.attack_shift < 0:
            issues.append(f"attack_shift must be non-negative (got {self.attack_shift})")
        if self.samples_per_class < 1:
            issues.append(f"samples_per_class must be positive (got {self.samples_per_class})")
        if self.class_names is not None and len(self.class_names) != self.num_classes:
            issues.append(f"class_names must list {self.num_classes} names, benign first")
        return issues

    def validate(self) -> None:
        issues = self.problems()
        if issues:
            raise ConfigurationError("Invalid synthetic spec", issues)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        if self.class_names is not None:
            data["class_names"] = list(self.class_names)
        return data


def place_cluster_means(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    """Rejection-sample K means on [0.2, 0.8]^d with pairwise distance >= separation."""
    box_diameter = (MEAN_HIGH - MEAN_LOW) * np.sqrt(spec.feature_dim)
    if spec.num_clusters > 1 and spec.cluster_separation > box_diameter:
        raise ConfigurationError(
            f"cluster_separation {spec.cluster_separation} exceeds the placement box diameter "
            f"{box_diameter:.3f} for feature_dim {spec.feature_dim}"
        )

    means: List[np.ndarray] = []
    for k in range(spec.num_clusters):
        for _ in range(MAX_PLACEMENT_ATTEMPTS):
            candidate = rng.uniform(MEAN_LOW, MEAN_HIGH, size=spec.feature_dim)
            if all(np.linalg.norm(candidate - m) >= spec.cluster_separation for m in means):
                means.append(candidate)
                break
        else:
            raise ConfigurationError(
                f"Could not place cluster {k} at separation {spec.cluster_separation} "
                f"in {spec.feature_dim} dimensions after {MAX_PLACEMENT_ATTEMPTS} attempts"
            )
    return np.vstack(means)


def attack_directions(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    """A x d orthonormal directions shared by all clusters."""
    basis, _ = np.linalg.qr(rng.normal(size=(spec.feature_dim, spec.attack_classes)))
    return basis.T


def attack_offsets(spec: SyntheticSpec, directions: np.ndarray) -> np.ndarray:
    """delta[k, a - 1] for attack class a of cluster k, each of norm attack_shift."""
    offsets = np.zeros((spec.num_clusters, spec.attack_classes, spec.feature_dim))
    for k in range(spec.num_clusters):
        for a in range(spec.attack_classes):
            d = (a + k) % spec.attack_classes if spec.conflicting_attacks else a
            offsets[k, a] = spec.attack_shift * directions[d]
    return offsets


def synth_generate(spec: SyntheticSpec) -> List[Dataset]:
    """
    One Dataset per ground-truth cluster, samples_per_class rows of every class.

    Deterministic under spec.seed.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    means = place_cluster_means(spec, rng)
    offsets = attack_offsets(spec, attack_directions(spec, rng))

    names = spec.resolved_class_names()
    feature_names = [f"f{i}" for i in range(spec.feature_dim)]
    devices: List[Dataset] = []
    for k in range(spec.num_clusters):
        blocks, labels = [], []
        for c in range(spec.num_classes):
            centre = means[k] if c == 0 else means[k] + offsets[k, c - 1]
            shape = (spec.samples_per_class, spec.feature_dim)
            noise = rng.normal(0.0, spec.intra_noise, size=shape)
            blocks.append(np.clip(centre + noise, 0.0, 1.0))
            labels.append(np.full(spec.samples_per_class, c, dtype=np.int64))
        devices.append(
            Dataset(
                np.vstack(blocks),
                np.concatenate(labels),
                spec.num_classes,
                feature_names=feature_names,
                class_names=names,
            )
        )
        logger.debug(f"Synthetic device {k}: {spec.num_classes * spec.samples_per_class} samples")
    return devices


def cluster_means(spec: SyntheticSpec) -> np.ndarray:
    """Means synth_generate() places for this spec (same seed stream)."""
    spec.validate()
    return place_cluster_means(spec, np.random.default_rng(spec.seed))
