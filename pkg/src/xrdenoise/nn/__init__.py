"""From-scratch residual CNN engine (NumPy + compiled im2col kernels)."""

from .checkpoint import CheckpointError, checkpoint_meta, load_checkpoint, save_checkpoint
from .layers import conv2d_backward, conv2d_forward
from .network import DivergenceError, NetworkSpec, he_init, init_params, network_backward, network_forward, zero_params
from .optim import OptimizerState, adam_amsgrad_step, adam_amsgrad_update
from .training import (
    HistoryRow,
    TrainConfig,
    TrainingDiverged,
    TrainResult,
    denoise,
    denoise_normalized,
    lr_schedule,
    predict_normalized,
    read_history,
    train,
    train_from_manifest,
    write_history,
)

__all__ = [
    "CheckpointError",
    "DivergenceError",
    "HistoryRow",
    "NetworkSpec",
    "OptimizerState",
    "TrainConfig",
    "TrainResult",
    "TrainingDiverged",
    "adam_amsgrad_step",
    "adam_amsgrad_update",
    "checkpoint_meta",
    "conv2d_backward",
    "conv2d_forward",
    "denoise",
    "denoise_normalized",
    "he_init",
    "init_params",
    "load_checkpoint",
    "lr_schedule",
    "network_backward",
    "network_forward",
    "predict_normalized",
    "read_history",
    "save_checkpoint",
    "train",
    "train_from_manifest",
    "write_history",
    "zero_params",
]
