"""Minimal reverse-mode autodiff engine: tensors, layers, Adam."""

from .tensor import (
    DEFAULT_DTYPE,
    Tensor,
    add,
    div,
    grad_enabled,
    matmul,
    mul,
    neg,
    no_grad,
    reshape,
    stack,
    sub,
    tabs,
    tmean,
    trace,
    transpose,
    tsum,
    zero_grads,
)
from .layers import (
    BatchNormState,
    batch_norm2d,
    center_crop2d,
    conv2d,
    conv_output_size,
    conv_transpose2d,
    conv_transpose_output_size,
    dropout2d,
    gelu,
    l1_loss,
    leaky_relu,
    linear,
    softmax,
    zero_pad2d,
)
from .optim import Adam
from .gradcheck import finite_difference_check

__all__ = [
    "DEFAULT_DTYPE",
    "Tensor",
    "add",
    "div",
    "grad_enabled",
    "matmul",
    "mul",
    "neg",
    "no_grad",
    "reshape",
    "stack",
    "sub",
    "tabs",
    "tmean",
    "trace",
    "transpose",
    "tsum",
    "zero_grads",
    "BatchNormState",
    "batch_norm2d",
    "center_crop2d",
    "conv2d",
    "conv_output_size",
    "conv_transpose2d",
    "conv_transpose_output_size",
    "dropout2d",
    "gelu",
    "l1_loss",
    "leaky_relu",
    "linear",
    "softmax",
    "zero_pad2d",
    "Adam",
    "finite_difference_check",
]
