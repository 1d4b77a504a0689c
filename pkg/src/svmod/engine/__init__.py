"""Sparse spatio-temporal tensor engine: rulebook convolutions, autodiff,
pointwise layers, Adam, checkpoints and a dense brute-force reference."""

from .autodiff import Tensor, as_tensor, no_grad
from .checkpoint import load_checkpoint, save_checkpoint
from .layers import (BatchNorm, SparseConv, concat_channels, pointwise, relu,
                     sigmoid, sparse_conv_apply)
from .optim import Adam, adam_step
from .rulebook import Rulebook, build_rulebook, kernel_offsets
from .tensor import SparseTensor
from . import flops

__all__ = [
    "Adam", "BatchNorm", "Rulebook", "SparseConv", "SparseTensor", "Tensor",
    "adam_step", "as_tensor", "build_rulebook", "concat_channels", "flops",
    "kernel_offsets", "load_checkpoint", "no_grad", "pointwise", "relu",
    "save_checkpoint", "sigmoid", "sparse_conv_apply",
]
