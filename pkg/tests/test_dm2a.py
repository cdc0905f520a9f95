"""Tests for the dual-head DM2A model."""

import tempfile
from pathlib import Path
from unittest.mock import patch

import numpy as np
import pytest

from clad_sim.exceptions import ConfigurationError, FingerprintError
from clad_sim.models.dm2a import (
    AnomalyStatus,
    AnomalyThreshold,
    DM2AConfig,
    DualOutput,
    ForwardMode,
    build_model,
    calibrate_threshold,
    composite_gradients,
    composite_loss,
    dm2a_preset,
    flops_per_sample,
    forward_dual,
    infer_labeled,
    infer_unlabeled,
    load_model,
    per_sample_mse,
    reconstruction_fingerprint,
    save_model,
    training_flops_per_sample,
)
from clad_sim.nn.layers import stack_forward_flops
from clad_sim.nn.losses import cross_entropy, mse_loss


@pytest.fixture
def config():
    return DM2AConfig(input_dim=20, encoder_widths=(16, 12, 8), num_classes=4)


@pytest.fixture
def model(config):
    return build_model(config, 0)


@pytest.fixture
def batch():
    rng = np.random.default_rng(42)
    return rng.uniform(size=(16, 20)), rng.integers(0, 4, size=16)


class TestConfig:
    """Test architecture configuration and presets."""

    def test_classifier_hidden_defaults_to_half_latent(self, config):
        assert config.latent_dim == 8
        assert config.classifier_hidden == 4

    def test_cic_preset_parameter_count(self):
        """The CIC topology 110-96-48-24 with a 12-unit head over 7 classes."""
        model = build_model(dm2a_preset("cic"), 0)
        assert model.param_count() == 33453
        # published size is quoted as "33.8K"
        assert model.param_count() == pytest.approx(33800, rel=0.02)

    def test_presets_expose_dataset_dimensions(self):
        assert dm2a_preset("gotham").input_dim == 68
        assert dm2a_preset("unsw").num_classes == 4

    def test_unknown_preset(self):
        with pytest.raises(ConfigurationError):
            dm2a_preset("kdd")

    def test_latent_must_be_narrower_than_input(self):
        """An encoder that does not compress is rejected."""
        with pytest.raises(ConfigurationError):
            DM2AConfig(input_dim=8, encoder_widths=(16, 8), num_classes=3)


class TestForward:
    """Test the dual forward pass."""

    def test_output_shapes(self, model, batch):
        x, _ = batch
        out = forward_dual(model, x)
        assert out.x_hat.shape == (16, 20)
        assert out.logits.shape == (16, 4)
        assert out.z.shape == (16, 8)

    def test_empty_batch(self, model):
        """A batch of zero rows yields empty outputs of the right width."""
        out = forward_dual(model, np.zeros((0, 20)))
        assert out.x_hat.shape == (0, 20)
        assert out.logits.shape == (0, 4)

    def test_inference_is_deterministic(self, model, batch):
        """Inference mode ignores dropout."""
        x, _ = batch
        a = forward_dual(model, x)
        b = forward_dual(model, x)
        np.testing.assert_array_equal(a.x_hat, b.x_hat)
        np.testing.assert_array_equal(a.logits, b.logits)

    def test_wrong_width(self, model):
        with pytest.raises(ConfigurationError):
            forward_dual(model, np.zeros((2, 19)))

    def test_same_seed_same_weights(self, config):
        a, b = build_model(config, 3), build_model(config, 3)
        np.testing.assert_array_equal(a.flatten(), b.flatten())


class TestCompositeLoss:
    """Test alpha-weighting of the two objectives."""

    def test_alpha_extremes(self, model, batch):
        """alpha = 0 is pure MSE; alpha = 1 is pure CE."""
        x, y = batch
        out = forward_dual(model, x)
        assert composite_loss(x, out, y, 0.0) == pytest.approx(mse_loss(x, out.x_hat))
        assert composite_loss(x, out, y, 1.0) == pytest.approx(cross_entropy(out.logits, y))

    def test_affine_in_alpha(self, model, batch):
        x, y = batch
        out = forward_dual(model, x)
        mse, ce = mse_loss(x, out.x_hat), cross_entropy(out.logits, y)
        for alpha in (0.2, 0.5, 0.8):
            expected = alpha * ce + (1 - alpha) * mse
            assert composite_loss(x, out, y, alpha) == pytest.approx(expected)

    @patch("clad_sim.models.dm2a.cross_entropy", return_value=1.0)
    @patch("clad_sim.models.dm2a.mse_loss", return_value=0.5)
    def test_reference_weighting(self, mock_mse, mock_ce):
        """MSE 0.5 and CE 1.0 at alpha = 0.8 give 0.9."""
        out = DualOutput(x_hat=np.zeros((1, 2)), logits=np.zeros((1, 2)), z=np.zeros((1, 1)))
        assert composite_loss(np.zeros((1, 2)), out, [0], 0.8) == pytest.approx(0.9)

    def test_labels_required_above_zero(self, model, batch):
        x, _ = batch
        with pytest.raises(ConfigurationError):
            composite_loss(x, forward_dual(model, x), None, 0.5)

    def test_alpha_out_of_range(self, model, batch):
        x, y = batch
        with pytest.raises(ConfigurationError):
            composite_loss(x, forward_dual(model, x), y, 1.5)


class TestGradients:
    """Test which branches receive gradient."""

    def test_alpha_zero_leaves_classifier_untouched(self, model, batch):
        x, _ = batch
        _, grads = composite_gradients(model, x, None, 0.0, training=False)
        n_cls = len(model.classifier)
        assert all(g is None for g in grads.weights[-n_cls:])
        assert all(g is not None for g in grads.weights[:-n_cls])

    def test_alpha_one_leaves_decoder_untouched(self, model, batch):
        x, y = batch
        _, grads = composite_gradients(model, x, y, 1.0, training=False)
        n_enc, n_dec = len(model.encoder), len(model.decoder)
        assert all(g is None for g in grads.weights[n_enc : n_enc + n_dec])

    def test_dual_loss_reaches_encoder(self, model, batch):
        """Both heads backpropagate into the shared encoder."""
        x, y = batch
        _, grads = composite_gradients(model, x, y, 0.5, training=False)
        assert np.any(grads.weights[0])

    def test_training_mode_uses_dropout(self, model, batch):
        """Two dropout draws give different losses."""
        x, y = batch
        a, _ = composite_gradients(model, x, y, 0.8, rng=np.random.default_rng(0))
        b, _ = composite_gradients(model, x, y, 0.8, rng=np.random.default_rng(1))
        assert a != b


class TestFingerprintAndThreshold:
    """Test benign reconstruction fingerprints and anomaly thresholds."""

    def test_fingerprint_is_reconstruction_mse(self, model, batch):
        x, _ = batch
        expected = mse_loss(x, forward_dual(model, x).x_hat)
        assert reconstruction_fingerprint(model, x) == pytest.approx(expected)

    def test_fingerprint_does_not_mutate(self, model, batch):
        x, _ = batch
        before = model.flatten()
        reconstruction_fingerprint(model, x)
        np.testing.assert_array_equal(model.flatten(), before)

    def test_fingerprint_needs_benign_samples(self, model):
        with pytest.raises(FingerprintError):
            reconstruction_fingerprint(model, np.zeros((0, 20)))

    @patch("clad_sim.models.dm2a.per_sample_mse", return_value=np.array([0.01, 0.09, 0.04]))
    def test_threshold_is_maximum_error(self, mock_mse, model):
        tau = calibrate_threshold(model, np.zeros((3, 20)))
        assert tau.tau == pytest.approx(0.09)

    def test_calibration_set_scores_normal(self, model, batch):
        """No sample of the calibration set exceeds its own threshold."""
        x, _ = batch
        tau = calibrate_threshold(model, x)
        assert not np.any(infer_unlabeled(model, x, tau) == AnomalyStatus.ANOMALOUS)

    def test_strict_comparison(self, model):
        """Only errors strictly above tau are anomalous."""
        tau = AnomalyThreshold(0.1)
        with patch(
            "clad_sim.models.dm2a.per_sample_mse", return_value=np.array([0.05, 0.15, 0.1])
        ):
            statuses = infer_unlabeled(model, np.zeros((3, 20)), tau)
        assert statuses.tolist() == [0, 1, 0]

    def test_negative_threshold(self):
        with pytest.raises(ValueError):
            AnomalyThreshold(-0.1)

    def test_per_sample_mse_shape(self, model, batch):
        x, _ = batch
        assert per_sample_mse(model, x).shape == (16,)


class TestInference:
    """Test labeled inference."""

    def test_argmax_ties_go_to_lowest_index(self, model):
        logits = np.array([[0.1, 0.9, 0.2, 0.0], [0.5, 0.5, 0.0, 0.5]])
        with patch("clad_sim.models.dm2a.predict_logits", return_value=logits):
            assert infer_labeled(model, np.zeros((2, 20))).tolist() == [1, 0]


class TestFlops:
    """Test the FLOP counting convention."""

    def test_modes_add_up(self, model):
        enc = stack_forward_flops(model.encoder)
        dec = stack_forward_flops(model.decoder)
        cls = stack_forward_flops(model.classifier)
        assert flops_per_sample(model, ForwardMode.RECONSTRUCTION) == enc + dec
        assert flops_per_sample(model, ForwardMode.CLASSIFICATION) == enc + cls
        assert flops_per_sample(model, ForwardMode.DUAL) == enc + dec + cls

    def test_training_is_three_forwards(self, model):
        assert training_flops_per_sample(model) == 3 * flops_per_sample(model)


class TestPersistence:
    """Test model checkpoints."""

    def test_save_and_load(self, model):
        with tempfile.TemporaryDirectory() as temp_dir:
            path = save_model(model, Path(temp_dir) / "model.ckpt")
            restored = load_model(path)
            assert restored.config == model.config
            np.testing.assert_array_equal(restored.flatten(), model.flatten())
