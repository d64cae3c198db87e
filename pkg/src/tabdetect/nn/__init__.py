from .autodiff import Tensor, backward, no_grad
from .layers import (
    bce_loss,
    encoder_forward,
    encoder_param_shapes,
    init_encoder_params,
    sinusoidal_positions,
)
from .optim import ParamSet, grad_check, optimizer_step
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "ParamSet",
    "Tensor",
    "backward",
    "bce_loss",
    "encoder_forward",
    "encoder_param_shapes",
    "grad_check",
    "init_encoder_params",
    "load_checkpoint",
    "no_grad",
    "optimizer_step",
    "save_checkpoint",
    "sinusoidal_positions",
]
