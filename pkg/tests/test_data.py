"""Tests for device datasets, CSV loading, scaling, splitting and the synthetic generator."""

import tempfile
from pathlib import Path

import numpy as np
import pytest

from clad_sim.data.dataset import (
    Dataset,
    apply_scaler,
    benign_subset,
    fit_scaler,
    load_csv,
    scan_labels,
    split_train_test,
    write_csv,
)
from clad_sim.data.synthetic import SyntheticSpec, cluster_means, synth_generate
from clad_sim.exceptions import (
    ConfigurationError,
    DataError,
    EmptyDatasetError,
    MalformedRowError,
    MissingColumnError,
    MissingFileError,
)


def _spec(**overrides) -> SyntheticSpec:
    params = dict(
        num_clusters=3,
        feature_dim=20,
        attack_classes=3,
        cluster_separation=0.5,
        intra_noise=0.03,
        attack_shift=0.2,
        seed=7,
        samples_per_class=100,
    )
    params.update(overrides)
    return SyntheticSpec(**params)


class TestLoadCsv:
    """Test reading featurized device files."""

    def test_three_row_file(self):
        """Labels map benign to 0 and attacks from 1 in sorted order."""
        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "device.csv"
            path.write_text("f0,f1,label\n0.1,0.2,benign\n0.3,0.4,dos\n0.5,0.6,benign\n")
            ds = load_csv(path)
            assert len(ds) == 3
            assert ds.labels.tolist() == [0, 1, 0]
            assert ds.feature_names == ("f0", "f1")
            assert ds.class_names == ("benign", "dos")
            np.testing.assert_allclose(ds.features[1], [0.3, 0.4])

    def test_malformed_row_reports_file_line(self):
        """A non-numeric cell is reported with its line number (header is line 1)."""
        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "device.csv"
            path.write_text("f0,f1,label\n0.1,0.2,benign\n0.3,abc,dos\n")
            with pytest.raises(MalformedRowError) as excinfo:
                load_csv(path)
            assert excinfo.value.row_numbers == [3]

    def test_missing_label_column(self):
        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "device.csv"
            path.write_text("f0,f1,class\n0.1,0.2,benign\n")
            with pytest.raises(MissingColumnError):
                load_csv(path)

    def test_missing_file(self):
        with pytest.raises(MissingFileError):
            load_csv("/nonexistent/device.csv")

    def test_header_only(self):
        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "device.csv"
            path.write_text("f0,f1,label\n")
            with pytest.raises(EmptyDatasetError):
                load_csv(path)

    def test_configured_class_list(self):
        """A shared class list keeps label indices aligned across devices."""
        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "device.csv"
            path.write_text("f0,label\n0.1,scan\n0.2,benign\n")
            ds = load_csv(path, class_names=["benign", "dos", "scan"])
            assert ds.class_count == 3
            assert ds.labels.tolist() == [2, 0]

    def test_unknown_label(self):
        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "device.csv"
            path.write_text("f0,label\n0.1,worm\n")
            with pytest.raises(DataError):
                load_csv(path, class_names=["benign", "dos"])

    def test_scan_labels_unions_files(self):
        with tempfile.TemporaryDirectory() as temp_dir:
            a = Path(temp_dir) / "a.csv"
            b = Path(temp_dir) / "b.csv"
            a.write_text("f0,label\n0.1,dos\n0.2,benign\n")
            b.write_text("f0,label\n0.1,scan\n0.2,benign\n")
            assert scan_labels([a, b], "label") == ["benign", "dos", "scan"]

    def test_write_then_read_keeps_columns(self):
        """write_csv emits the schema load_csv reads."""
        devices = synth_generate(_spec(num_clusters=1, samples_per_class=5))
        with tempfile.TemporaryDirectory() as temp_dir:
            path = write_csv(devices[0], Path(temp_dir) / "device_0.csv")
            loaded = load_csv(path, class_names=devices[0].class_names)
            assert loaded.feature_names == devices[0].feature_names
            np.testing.assert_array_equal(loaded.labels, devices[0].labels)
            np.testing.assert_allclose(loaded.features, devices[0].features)


class TestScaler:
    """Test per-device min-max scaling."""

    def test_reference_example(self):
        """Min-max per column; a constant column maps to zero."""
        ds = Dataset(np.array([[0.0, 7.0], [5.0, 7.0], [10.0, 7.0]]), [0, 0, 0], 1)
        scaled = apply_scaler(ds, fit_scaler(ds))
        np.testing.assert_allclose(scaled.features, [[0.0, 0.0], [0.5, 0.0], [1.0, 0.0]])

    def test_empty_dataset(self):
        with pytest.raises(EmptyDatasetError):
            fit_scaler(Dataset(np.zeros((0, 2)), [], 2))


class TestSplit:
    """Test the stratified train/test split."""

    def _dataset(self) -> Dataset:
        rng = np.random.default_rng(0)
        return Dataset(rng.normal(size=(100, 3)), [0] * 50 + [1] * 50, 2)

    def test_even_split(self):
        train, test = split_train_test(self._dataset(), 0.5, 1)
        assert len(train) == 50
        assert len(test) == 50
        assert train.class_counts().tolist() == [25, 25]

    def test_disjoint_and_complete(self):
        train, test = split_train_test(self._dataset(), 0.5, 1)
        assert set(train.indices).isdisjoint(test.indices)
        assert sorted([*train.indices, *test.indices]) == list(range(100))

    def test_same_seed_same_split(self):
        a, _ = split_train_test(self._dataset(), 0.5, 9)
        b, _ = split_train_test(self._dataset(), 0.5, 9)
        np.testing.assert_array_equal(a.indices, b.indices)

    def test_singleton_class_strict(self):
        ds = Dataset(np.zeros((3, 1)), [0, 0, 1], 2)
        with pytest.raises(DataError):
            split_train_test(ds, 0.5, 0)

    def test_singleton_class_lenient(self):
        """Without strict stratification a singleton class goes to train."""
        ds = Dataset(np.zeros((3, 1)), [0, 0, 1], 2)
        train, test = split_train_test(ds, 0.5, 0, strict=False)
        assert 1 in train.labels.tolist()
        assert 1 not in test.labels.tolist()

    def test_benign_subset(self):
        ds = self._dataset()
        assert set(benign_subset(ds).labels.tolist()) == {0}


class TestSyntheticGenerator:
    """Test the multi-cluster generator."""

    def test_deterministic(self):
        """Same spec, same bytes."""
        a = synth_generate(_spec())
        b = synth_generate(_spec())
        for da, db in zip(a, b):
            assert da.features.tobytes() == db.features.tobytes()
            np.testing.assert_array_equal(da.labels, db.labels)

    def test_shape(self):
        devices = synth_generate(_spec())
        assert len(devices) == 3
        assert all(len(d) == 4 * 100 for d in devices)
        assert all(d.class_counts().tolist() == [100] * 4 for d in devices)
        assert all(np.all((d.features >= 0) & (d.features <= 1)) for d in devices)

    def test_single_cluster(self):
        assert len(synth_generate(_spec(num_clusters=1))) == 1

    def test_benign_samples_are_nearest_their_own_mean(self):
        """Clusters are recoverable: nearest-mean classification of benign samples."""
        spec = _spec(num_clusters=5)
        means = cluster_means(spec)
        hits = total = 0
        for k, device in enumerate(synth_generate(spec)):
            benign = benign_subset(device).features
            nearest = np.argmin(((benign[:, None, :] - means[None]) ** 2).sum(axis=2), axis=1)
            hits += int(np.sum(nearest == k))
            total += len(benign)
        assert hits / total >= 0.99

    def test_means_respect_separation(self):
        means = cluster_means(_spec(num_clusters=5))
        distances = [
            np.linalg.norm(means[i] - means[j]) for i in range(5) for j in range(i + 1, 5)
        ]
        assert min(distances) >= 0.5

    def test_conflicting_attacks_rotate_directions(self):
        """The same attack class moves a different way in each cluster."""
        spec = _spec(num_clusters=2, intra_noise=0.0, conflicting_attacks=True)
        means = cluster_means(spec)
        devices = synth_generate(spec)
        shift_0 = devices[0].features[devices[0].labels == 1][0] - means[0]
        shift_1 = devices[1].features[devices[1].labels == 1][0] - means[1]
        assert not np.allclose(shift_0, shift_1)

    def test_invalid_spec(self):
        with pytest.raises(ConfigurationError):
            synth_generate(_spec(attack_classes=0))
