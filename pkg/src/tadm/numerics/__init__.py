"""Tensor substrate: float32 arrays, reverse-mode autodiff, Adam, RNG."""

from .adam import AdamState, adam_step
from .gradcheck import GradCheckReport, grad_check
from .rng import Rng, derive_seed, randn
from .tensor import (
    Tensor,
    add,
    add_bias,
    add_channel_vec,
    avg_pool2,
    concat,
    conv2d,
    conv2d_nhwc,
    group_norm,
    matmul,
    mean,
    mul,
    no_grad,
    relu,
    reshape,
    silu,
    spatial_mean,
    sub,
    sum_all,
    tensor_op,
    upsample2,
)

__all__ = [
    "AdamState",
    "GradCheckReport",
    "Rng",
    "Tensor",
    "adam_step",
    "add",
    "add_bias",
    "add_channel_vec",
    "avg_pool2",
    "concat",
    "conv2d",
    "conv2d_nhwc",
    "derive_seed",
    "grad_check",
    "group_norm",
    "matmul",
    "mean",
    "mul",
    "no_grad",
    "randn",
    "relu",
    "reshape",
    "silu",
    "spatial_mean",
    "sub",
    "sum_all",
    "tensor_op",
    "upsample2",
]
