"""From-scratch convolutional surrogate: ops, network, Adam, training, files."""

from .adam import AdamConfig, AdamState, adam_step
from .model_io import load_model, save_model
from .network import (BASE_CHANNELS, ConvLayerSpec, NetworkSpec, backward_batch,
                      build_network_spec, check_params, forward_batch,
                      forward_from, init_params, predict, scaled_channels)
from .training import TrainConfig, normalize_per_sample, train

__all__ = [
    "AdamConfig", "AdamState", "adam_step", "load_model", "save_model",
    "BASE_CHANNELS", "ConvLayerSpec", "NetworkSpec", "backward_batch",
    "build_network_spec", "check_params", "forward_batch", "forward_from",
    "init_params", "predict", "scaled_channels", "TrainConfig",
    "normalize_per_sample", "train",
]
