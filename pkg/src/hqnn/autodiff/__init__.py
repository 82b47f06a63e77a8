"""Reverse-mode automatic differentiation over dense float64 tensors."""
from .functional import (
    add,
    backward,
    bce_loss,
    concat,
    conv2d,
    flatten,
    layer_norm,
    linear,
    matmul,
    maxpool2d,
    mean,
    mul,
    patchify,
    relu,
    reshape,
    sigmoid,
    softmax,
    sub,
    sum,
    transpose,
)
from .optim import AdamState, adam_step, zero_grad
from .tensor import Graph, Node, Tensor, record

__all__ = [
    "AdamState",
    "Graph",
    "Node",
    "Tensor",
    "adam_step",
    "add",
    "backward",
    "bce_loss",
    "concat",
    "conv2d",
    "flatten",
    "layer_norm",
    "linear",
    "matmul",
    "maxpool2d",
    "mean",
    "mul",
    "patchify",
    "record",
    "relu",
    "reshape",
    "sigmoid",
    "softmax",
    "sub",
    "sum",
    "transpose",
    "zero_grad",
]
