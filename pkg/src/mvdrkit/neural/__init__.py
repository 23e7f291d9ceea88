"""Autograd primitives, GRU networks, the filter estimator and checkpoints."""
from .autodiff import Tensor, causal_conv1d, check_gradient, layer_norm, numeric_gradient, prelu
from .gru import GruLayer, GruNet, GruNetConfig, gru_forward
from .estimator import EstimatorConfig, FilterEstimator, TFFilterEstimator, build_estimator
from .checkpoint import load_checkpoint, save_checkpoint, CheckpointError

__all__ = [
    "Tensor", "causal_conv1d", "check_gradient", "layer_norm", "numeric_gradient", "prelu",
    "GruLayer", "GruNet", "GruNetConfig", "gru_forward",
    "EstimatorConfig", "FilterEstimator", "TFFilterEstimator", "build_estimator",
    "load_checkpoint", "save_checkpoint", "CheckpointError",
]
