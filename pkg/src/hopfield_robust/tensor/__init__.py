"""Minimal dense-tensor engine: autodiff, NN operators, RNG and AdamW."""
from .nn import (
    conv2d,
    conv2d_transpose,
    conv_output_size,
    dropout,
    linear,
    maxpool2d,
    mse_loss,
    nll_loss,
)
from .optim import AdamW
from .random import Rng, gaussian_sample
from .tensor import (
    Tensor,
    add,
    as_tensor,
    concat,
    div,
    exp,
    flatten,
    log,
    log_softmax,
    matmul,
    mean,
    mul,
    neg,
    parameter,
    relu,
    reshape,
    sigmoid,
    softmax,
    square,
    sub,
    tensor_sum,
    transpose,
)

__all__ = [
    "AdamW", "Rng", "Tensor", "add", "as_tensor", "concat", "conv2d", "conv2d_transpose",
    "conv_output_size", "div", "dropout", "exp", "flatten", "gaussian_sample", "linear", "log",
    "log_softmax", "matmul", "maxpool2d", "mean", "mse_loss", "mul", "neg", "nll_loss",
    "parameter", "relu", "reshape", "sigmoid", "softmax", "square", "sub", "tensor_sum",
    "transpose",
]
