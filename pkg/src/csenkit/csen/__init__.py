"""Convolutional support estimator networks."""
from .checkpoint import load_checkpoint, save_checkpoint
from .model import (
    Activation,
    CsenModel,
    LayerKind,
    LayerSpec,
    backward_gradients,
    classify_head,
    cross_entropy_gradients,
    csen1_init,
    csen2_init,
    forward,
    group_means,
    loss_mse,
    predict,
    threshold_support,
)
from .train import AdamState, LossKind, TrainConfig, TrainHistory, TrainingDiverged, train, tune_threshold

__all__ = [
    "Activation",
    "AdamState",
    "CsenModel",
    "LayerKind",
    "LayerSpec",
    "LossKind",
    "TrainConfig",
    "TrainHistory",
    "TrainingDiverged",
    "backward_gradients",
    "classify_head",
    "cross_entropy_gradients",
    "csen1_init",
    "csen2_init",
    "forward",
    "group_means",
    "load_checkpoint",
    "loss_mse",
    "predict",
    "save_checkpoint",
    "threshold_support",
    "train",
    "tune_threshold",
]
