"""Sparse convolution and pointwise layers over SparseTensor features.

The convolution is a fused autodiff op: per kernel offset it gathers input
rows, multiplies by that offset's weight matrix and scatters into output
rows. Within one offset the gather and scatter indices are unique (a site
has at most one neighbor at a fixed offset), so plain fancy-indexed
accumulation is exact.
"""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from ..errors import ShapeMismatch
from . import flops
from .autodiff import Tensor, _node, as_tensor, concat
from .rulebook import Rulebook, build_rulebook
from .tensor import SparseTensor


def uniform_init(rng, shape, fan_in, dtype):
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def sparse_conv_apply(x: Tensor, w: Tensor, b: Tensor | None, rb: Rulebook):
    """out[j] = bias + sum_d sum_{(i,j) in pairs[d]} W[d]^T . x[i]."""
    x, w = as_tensor(x), as_tensor(w)
    n_out = rb.n_out
    c_in, c_out = w.data.shape[1], w.data.shape[2]
    if x.data.shape[1] != c_in:
        raise ShapeMismatch(f"input has {x.data.shape[1]} channels, "
                            f"weights expect {c_in}")
    dtype = x.data.dtype
    out = np.zeros((n_out, c_out), dtype=dtype)
    if b is not None:
        out += b.data
    for k, (in_rows, out_rows) in enumerate(rb.pairs):
        if len(in_rows):
            out[out_rows] += x.data[in_rows] @ w.data[k]
    flops.COUNTER.add_conv(rb.pair_count(), c_in, c_out,
                           n_out if b is not None else 0)

    parents = (x, w) if b is None else (x, w, b)

    def backward(g):
        gx = gw = gb = None
        if x.requires_grad:
            gx = np.zeros_like(x.data)
        if w.requires_grad:
            gw = np.zeros_like(w.data)
        for k, (in_rows, out_rows) in enumerate(rb.pairs):
            if not len(in_rows):
                continue
            gk = g[out_rows]
            if gx is not None:
                gx[in_rows] += gk @ w.data[k].T
            if gw is not None:
                gw[k] = x.data[in_rows].T @ gk
        if b is not None and b.requires_grad:
            gb = g.sum(axis=0)
        return (gx, gw) if b is None else (gx, gw, gb)

    return _node(out, parents, backward)


class SparseConv:
    """A sparse 3D convolution layer (submanifold, strided or transposed)."""

    def __init__(self, c_in, c_out, kernel=(3, 3, 3), stride=(1, 1, 1),
                 mode="submanifold", bias=True, rng=None, dtype=np.float32,
                 name="conv"):
        rng = rng or np.random.default_rng(0)
        self.c_in, self.c_out = c_in, c_out
        self.kernel = tuple(kernel)
        self.stride = tuple(stride)
        self.mode = mode
        self.name = name
        k_vol = int(np.prod(self.kernel))
        fan_in = k_vol * c_in
        self.w = Tensor(uniform_init(rng, (k_vol, c_in, c_out), fan_in, dtype),
                        requires_grad=True, name=f"{name}.w")
        self.b = None
        if bias:
            self.b = Tensor(uniform_init(rng, (c_out,), fan_in, dtype),
                            requires_grad=True, name=f"{name}.b")

    def __call__(self, st: SparseTensor, rb: Rulebook | None = None,
                 record: Rulebook | None = None) -> SparseTensor:
        if rb is None:
            rb, _ = build_rulebook(st, self.kernel, self.stride, self.mode,
                                   record=record)
        if rb.kernel != self.kernel or rb.mode != self.mode:
            raise ShapeMismatch(
                f"rulebook ({rb.mode}, {rb.kernel}) does not fit layer "
                f"({self.mode}, {self.kernel})")
        feats = sparse_conv_apply(as_tensor(st.feats), self.w, self.b, rb)
        return SparseTensor(rb.out_coords, feats, rb.out_shape, _checked=True)

    def params(self):
        out = OrderedDict({f"{self.name}.w": self.w})
        if self.b is not None:
            out[f"{self.name}.b"] = self.b
        return out

    def buffers(self):
        return OrderedDict()


class BatchNorm:
    """Per-channel normalization over the active sites.

    Train mode uses batch statistics (population variance) and updates the
    running buffers; eval mode applies the running statistics. An empty
    input passes through unchanged.
    """

    def __init__(self, channels, eps=1e-5, momentum=0.1, dtype=np.float32,
                 name="bn"):
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.name = name
        self.gamma = Tensor(np.ones(channels, dtype=dtype),
                            requires_grad=True, name=f"{name}.gamma")
        self.beta = Tensor(np.zeros(channels, dtype=dtype),
                           requires_grad=True, name=f"{name}.beta")
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)

    def __call__(self, st: SparseTensor, train: bool = False) -> SparseTensor:
        x = as_tensor(st.feats)
        if st.n == 0:
            return st.with_feats(x)
        if train:
            mu = x.mean(axis=0, keepdims=True)
            centered = x - mu
            var = (centered ** 2.0).mean(axis=0, keepdims=True)
            inv = (var + self.eps) ** -0.5
            xhat = centered * inv
            m = self.momentum
            self.running_mean = ((1 - m) * self.running_mean
                                 + m * mu.data.ravel()).astype(self.running_mean.dtype)
            self.running_var = ((1 - m) * self.running_var
                                + m * var.data.ravel()).astype(self.running_var.dtype)
        else:
            inv_arr = 1.0 / np.sqrt(self.running_var + self.eps)
            xhat = (x - self.running_mean[None, :]) * inv_arr[None, :]
        return st.with_feats(xhat * self.gamma + self.beta)

    def params(self):
        return OrderedDict({f"{self.name}.gamma": self.gamma,
                            f"{self.name}.beta": self.beta})

    def buffers(self):
        return OrderedDict({f"{self.name}.running_mean": self.running_mean,
                            f"{self.name}.running_var": self.running_var})

    def load_buffers(self, mean, var):
        self.running_mean = np.asarray(mean, dtype=self.running_mean.dtype)
        self.running_var = np.asarray(var, dtype=self.running_var.dtype)


def relu(st: SparseTensor) -> SparseTensor:
    return st.with_feats(as_tensor(st.feats).relu())


def sigmoid(st: SparseTensor) -> SparseTensor:
    return st.with_feats(as_tensor(st.feats).sigmoid())


def concat_channels(a: SparseTensor, b: SparseTensor) -> SparseTensor:
    if not np.array_equal(a.coords, b.coords):
        raise ShapeMismatch("channel concat requires identical coordinates")
    return a.with_feats(concat([as_tensor(a.feats), as_tensor(b.feats)], axis=1))


def pointwise(st: SparseTensor, op, bn: BatchNorm | None = None,
              train: bool = False) -> SparseTensor:
    """Feature-wise transform keeping coordinates: relu | sigmoid | batchnorm."""
    if op == "relu":
        return relu(st)
    if op == "sigmoid":
        return sigmoid(st)
    if op == "batchnorm":
        if bn is None:
            raise ValueError("pointwise batchnorm needs a BatchNorm layer")
        return bn(st, train=train)
    raise ValueError(f"unknown pointwise op {op!r}")
