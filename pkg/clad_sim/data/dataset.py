"""
Device Datasets

Featurized traffic of one device: a feature matrix, integer labels (0 = benign) and the
row indices the samples had in their source pool. Ingestion is CSV via pandas, one file
per device, with a single label column and numeric feature columns in header order.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from ..exceptions import (
    DataError,
    EmptyDatasetError,
    MalformedRowError,
    MissingColumnError,
    MissingFileError,
)

BENIGN_LABEL = "benign"

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Sample:
    features: np.ndarray
    label: int


@dataclass(frozen=True)
class Dataset:
    """Immutable block of samples sharing one feature dimension."""

    features: np.ndarray
    labels: np.ndarray
    class_count: int
    indices: Optional[np.ndarray] = None
    feature_names: Tuple[str, ...] = ()
    class_names: Tuple[str, ...] = ()

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float64)
        if features.ndim == 1 and features.size == 0:
            features = features.reshape(0, len(self.feature_names))
        labels = np.array(self.labels, dtype=np.int64).reshape(-1)
        if features.ndim != 2 or features.shape[0] != labels.shape[0]:
            raise DataError(f"Features {features.shape} do not match {labels.shape[0]} labels")
        if not np.all(np.isfinite(features)):
            raise DataError("Features must be finite")
        if labels.size and (labels.min() < 0 or labels.max() >= self.class_count):
            raise DataError(f"Labels must lie in [0, {self.class_count})")
        indices = (
            np.arange(labels.size, dtype=np.int64)
            if self.indices is None
            else np.array(self.indices, dtype=np.int64).reshape(-1)
        )
        if indices.shape != labels.shape:
            raise DataError("Sample index array does not match the sample count")
        features.setflags(write=False)
        labels.setflags(write=False)
        indices.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "class_names", tuple(self.class_names))

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def __iter__(self) -> Iterator[Sample]:
        for row, label in zip(self.features, self.labels):
            yield Sample(row, int(label))

    @property
    def feature_dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def samples(self) -> List[Sample]:
        return list(self)

    def subset(self, positions: Sequence[int]) -> "Dataset":
        positions = np.asarray(positions, dtype=np.int64)
        return Dataset(
            self.features[positions],
            self.labels[positions],
            self.class_count,
            self.indices[positions],
            self.feature_names,
            self.class_names,
        )

    def with_features(self, features: np.ndarray) -> "Dataset":
        return Dataset(
            features,
            self.labels,
            self.class_count,
            self.indices,
            self.feature_names,
            self.class_names,
        )

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.class_count)

    def positions_of(self, label: int) -> np.ndarray:
        return np.flatnonzero(self.labels == label)


def benign_subset(ds: Dataset) -> Dataset:
    """Exactly the label-0 samples."""
    return ds.subset(ds.positions_of(0))


def concat(datasets: Sequence[Dataset]) -> Dataset:
    first = datasets[0]
    return Dataset(
        np.vstack([d.features for d in datasets]),
        np.concatenate([d.labels for d in datasets]),
        first.class_count,
        np.concatenate([d.indices for d in datasets]),
        first.feature_names,
        first.class_names,
    )


def load_csv(
    path: Union[str, Path],
    label_column: str = "label",
    benign_label_value: str = BENIGN_LABEL,
    class_names: Optional[Sequence[str]] = None,
) -> Dataset:
    """
    Load one device's featurized CSV.

    Args:
        path: CSV file (UTF-8, header row, comma separated)
        label_column: Name of the label column
        benign_label_value: Label text mapped to class 0
        class_names: Full class list, benign first; when omitted the file's own
            attack labels are sorted and numbered from 1

    Returns:
        Dataset with features in header order
    """
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"Device CSV not found: {path}")

    frame = pd.read_csv(path, encoding="utf-8", dtype=str, keep_default_na=False)
    if label_column not in frame.columns:
        raise MissingColumnError(f"{path}: label column '{label_column}' not in header")

    feature_names = [c for c in frame.columns if c != label_column]
    raw = frame[feature_names].apply(lambda col: pd.to_numeric(col.str.strip(), errors="coerce"))
    bad_rows = ~np.isfinite(raw.to_numpy(dtype=np.float64)).all(axis=1)
    if bad_rows.any():
        # Header is line 1 of the file, so data row i sits on line i + 2.
        rows = [int(i) + 2 for i in np.flatnonzero(bad_rows)]
        raise MalformedRowError(str(path), rows)
    if len(frame) == 0:
        raise EmptyDatasetError(f"{path} has no data rows")

    labels_text = frame[label_column].astype(str).str.strip()
    if class_names is None:
        attacks = sorted(set(labels_text) - {benign_label_value})
        class_names = [benign_label_value, *attacks]
    else:
        class_names = list(class_names)
        if class_names[0] != benign_label_value:
            raise DataError(f"class_names must start with the benign label '{benign_label_value}'")
    mapping = {name: idx for idx, name in enumerate(class_names)}
    unknown = sorted(set(labels_text) - set(mapping))
    if unknown:
        raise DataError(f"{path}: labels {unknown} are not in the configured class list")

    labels = labels_text.map(mapping).to_numpy(dtype=np.int64)
    logger.debug(f"Loaded {len(frame)} rows x {len(feature_names)} features from {path}")
    return Dataset(
        raw.to_numpy(dtype=np.float64),
        labels,
        len(class_names),
        feature_names=feature_names,
        class_names=class_names,
    )


def scan_labels(
    paths: Sequence[Union[str, Path]], label_column: str, benign_label_value: str = BENIGN_LABEL
) -> List[str]:
    """Union of label values across device files, benign first, attacks sorted."""
    seen = set()
    for path in paths:
        path = Path(path)
        if not path.exists():
            raise MissingFileError(f"Device CSV not found: {path}")
        column = pd.read_csv(path, dtype=str, keep_default_na=False)
        if label_column not in column.columns:
            raise MissingColumnError(f"{path}: label column '{label_column}' not in header")
        seen.update(column[label_column].str.strip())
    return [benign_label_value, *sorted(seen - {benign_label_value})]


def write_csv(ds: Dataset, path: Union[str, Path], label_column: str = "label") -> Path:
    """Write a dataset in the same schema load_csv() reads."""
    path = Path(path)
    names = list(ds.feature_names) or [f"f{i}" for i in range(ds.feature_dim)]
    classes = list(ds.class_names) or [BENIGN_LABEL] + [
        f"class_{c}" for c in range(1, ds.class_count)
    ]
    frame = pd.DataFrame(ds.features, columns=names)
    frame[label_column] = [classes[c] for c in ds.labels]
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, encoding="utf-8")
    return path


@dataclass(frozen=True)
class ScalerParams:
    minimum: np.ndarray
    maximum: np.ndarray


def fit_scaler(ds: Dataset) -> ScalerParams:
    if len(ds) == 0:
        raise EmptyDatasetError("Cannot fit a scaler on an empty dataset")
    return ScalerParams(ds.features.min(axis=0), ds.features.max(axis=0))


def apply_scaler(ds: Dataset, params: ScalerParams) -> Dataset:
    """(x - min) / (max - min); constant features map to 0."""
    span = params.maximum - params.minimum
    constant = span == 0
    safe_span = np.where(constant, 1.0, span)
    scaled = (ds.features - params.minimum) / safe_span
    scaled[:, constant] = 0.0
    return ds.with_features(scaled)


def _stratified_train_counts(counts: np.ndarray, ratio: float) -> np.ndarray:
    """Largest-remainder rounding of ratio * n_c per class; ties go to lower classes."""
    exact = counts * ratio
    train = np.floor(exact).astype(np.int64)
    target = int(round(float(counts.sum()) * ratio))
    remainders = exact - train
    order = sorted(range(len(counts)), key=lambda c: (-remainders[c], c))
    for c in order:
        if train.sum() >= target:
            break
        if remainders[c] > 0:
            train[c] += 1
    return train


def split_train_test(
    ds: Dataset, ratio: float, seed, strict: bool = True
) -> Tuple[Dataset, Dataset]:
    """
    Seeded, label-stratified split.

    Args:
        ds: Dataset to split
        ratio: Fraction of each class that goes to the train side
        seed: Integer seed or numpy Generator
        strict: Reject classes with fewer than two samples; when False such singletons
            go to the train side

    Returns:
        (train, test)
    """
    if not 0.0 < ratio < 1.0:
        raise DataError(f"Split ratio must lie in (0, 1) (got {ratio})")
    counts = ds.class_counts()
    singletons = [c for c, n in enumerate(counts) if n == 1]
    if strict and singletons:
        raise DataError(f"Classes {singletons} have fewer than two samples; cannot stratify")

    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    train_counts = _stratified_train_counts(counts, ratio)
    train_pos: List[np.ndarray] = []
    test_pos: List[np.ndarray] = []
    for c in range(ds.class_count):
        members = rng.permutation(ds.positions_of(c))
        k = int(counts[c]) if counts[c] == 1 else int(train_counts[c])
        train_pos.append(members[:k])
        test_pos.append(members[k:])
    train = np.sort(np.concatenate(train_pos)) if train_pos else np.zeros(0, dtype=np.int64)
    test = np.sort(np.concatenate(test_pos)) if test_pos else np.zeros(0, dtype=np.int64)
    return ds.subset(train), ds.subset(test)
