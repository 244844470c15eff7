"""PointNet-style Manning's n regressor written directly in numpy."""
from .checkpoint import load_checkpoint, save_checkpoint
from .net import (
    NetConfig,
    RegressionNet,
    backward,
    clamp_n,
    forward,
    forward_batch,
    loss_l1,
    parameter_count,
    predict_batch,
    predict_n,
)
from .train import TrainConfig, adam_step, evaluate_loss, lr_at, train

__all__ = [
    "NetConfig", "RegressionNet", "TrainConfig", "adam_step", "backward", "clamp_n",
    "evaluate_loss", "forward", "forward_batch", "load_checkpoint", "loss_l1", "lr_at",
    "parameter_count", "predict_batch", "predict_n", "save_checkpoint", "train",
]
