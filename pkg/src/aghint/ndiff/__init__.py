"""Minimal dense reverse-mode autodiff for the AGHINT layer set."""

from .gradcheck import grad_check
from .ops import (
    add,
    binary_cross_entropy_with_logits,
    concat,
    cross_entropy_with_logits,
    dense_softmax,
    dropout,
    elu,
    exp,
    gather_rows,
    layer_norm,
    leaky_relu,
    log,
    matmul,
    mul,
    scale,
    scatter_weighted_sum,
    segment_softmax,
    sigmoid,
    sum_last,
)
from .tensor import (
    Tape,
    Tensor,
    as_tensor,
    default_dtype,
    get_precision,
    parameter,
    precision,
    set_precision,
)

__all__ = [
    "Tape", "Tensor", "add", "as_tensor", "binary_cross_entropy_with_logits", "concat",
    "cross_entropy_with_logits", "default_dtype", "dense_softmax", "dropout", "elu", "exp",
    "gather_rows", "get_precision", "grad_check", "layer_norm", "leaky_relu", "log",
    "matmul", "mul", "parameter", "precision", "scale", "scatter_weighted_sum",
    "segment_softmax", "set_precision", "sigmoid", "sum_last",
]
