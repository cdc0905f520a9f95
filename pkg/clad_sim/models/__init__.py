"""DM2A model: shared encoder with reconstruction and classification heads."""

from .dm2a import (
    BENIGN_CLASS,
    AnomalyStatus,
    AnomalyThreshold,
    DM2AConfig,
    DM2AModel,
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

__all__ = [
    "BENIGN_CLASS",
    "AnomalyStatus",
    "AnomalyThreshold",
    "DM2AConfig",
    "DM2AModel",
    "DualOutput",
    "ForwardMode",
    "build_model",
    "calibrate_threshold",
    "composite_gradients",
    "composite_loss",
    "dm2a_preset",
    "flops_per_sample",
    "forward_dual",
    "infer_labeled",
    "infer_unlabeled",
    "load_model",
    "per_sample_mse",
    "reconstruction_fingerprint",
    "save_model",
    "training_flops_per_sample",
]
