"""From-scratch differentiable 3D-UNet: layers, loss, optimizer, checkpoints."""

from .adam import adam_step
from .checkpoint import load_checkpoint, save_checkpoint
from .ops import (
    bce_loss,
    bce_with_logits,
    conv3d,
    conv3d_backward,
    instance_norm,
    instance_norm_backward,
    maxpool3d,
    maxpool3d_backward,
    relu,
    relu_backward,
    sigmoid,
    sigmoid_backward,
    transposed_conv3d,
    transposed_conv3d_backward,
)
from .unet import UNet3D, UNetConfig, analytic_param_count, param_count

__all__ = [
    "UNet3D",
    "UNetConfig",
    "adam_step",
    "analytic_param_count",
    "bce_loss",
    "bce_with_logits",
    "conv3d",
    "conv3d_backward",
    "instance_norm",
    "instance_norm_backward",
    "load_checkpoint",
    "maxpool3d",
    "maxpool3d_backward",
    "param_count",
    "relu",
    "relu_backward",
    "save_checkpoint",
    "sigmoid",
    "sigmoid_backward",
    "transposed_conv3d",
    "transposed_conv3d_backward",
]
