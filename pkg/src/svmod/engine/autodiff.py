"""Reverse-mode autodiff over numpy arrays.

A small tape: each op produces a Tensor holding its parents and a closure
computing parent gradients from the output gradient. backward() walks the
recorded graph in reverse topological order. Tensors are treated as
immutable after being recorded; in-place updates go through assign(),
which bumps a version counter so a stale graph is detected.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from ..errors import GraphStale

_grad_enabled = True


@contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward",
                 "_version", "name")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()          # tuple of (Tensor, recorded_version)
        self._backward = None       # out_grad -> list of parent grads
        self._version = 0
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{tag})"

    def assign(self, data):
        """In-place value replacement (optimizer updates); invalidates tapes."""
        data = np.asarray(data, dtype=self.data.dtype)
        if data.shape != self.data.shape:
            raise ValueError(f"assign shape {data.shape} != {self.data.shape}")
        self.data = data
        self._version += 1

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data)

    # -- graph walk ---------------------------------------------------------

    def _topo(self):
        order, seen, stack = [], set(), [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent, _ in node._parents:
                stack.append((parent, False))
        return order

    def backward(self, grad=None):
        """Accumulate gradients of this tensor w.r.t. every graph leaf."""
        if grad is None:
            grad = np.ones_like(self.data)
        order = self._topo()
        for node in order:
            for parent, version in node._parents:
                if parent._version != version:
                    raise GraphStale(
                        f"tensor {parent.name or id(parent)} was mutated after "
                        "the forward pass was recorded")
        self.grad = np.asarray(grad, dtype=self.data.dtype)
        for node in reversed(order):
            if node._backward is None or node.grad is None:
                continue
            for (parent, _), g in zip(node._parents, node._backward(node.grad)):
                if g is None or not parent.requires_grad:
                    continue
                parent.grad = g if parent.grad is None else parent.grad + g

    # -- operator sugar -----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor) else -np.asarray(other))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __neg__(self):
        return mul(self, -1.0)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, power(other, -1.0))
        return mul(self, 1.0 / np.asarray(other))

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis, keepdims)

    def relu(self):
        return relu(self)

    def sigmoid(self):
        return sigmoid(self)

    def logsigmoid(self):
        return logsigmoid(self)

    def abs(self):
        return absolute(self)

    def log(self):
        return log(self)

    def exp(self):
        return exp(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward):
    """Create an op output; records the tape only when gradients can flow."""
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple((p, p._version) for p in parents)
        out._backward = backward
    return out


def _unbroadcast(grad, shape):
    """Reduce a broadcast gradient back to `shape`."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape))
                 if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# -- primitive ops ----------------------------------------------------------

def add(a, b):
    if isinstance(b, Tensor) and not isinstance(a, Tensor):
        a, b = b, a
    a = as_tensor(a)
    if isinstance(b, Tensor):
        data = a.data + b.data
        return _node(data, (a, b), lambda g: (
            _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)))
    const = np.asarray(b)
    data = a.data + const
    return _node(data, (a,), lambda g: (_unbroadcast(g, a.data.shape),))


def mul(a, b):
    if isinstance(b, Tensor) and not isinstance(a, Tensor):
        a, b = b, a
    a = as_tensor(a)
    if isinstance(b, Tensor):
        data = a.data * b.data
        return _node(data, (a, b), lambda g: (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape)))
    const = np.asarray(b)
    data = a.data * const
    return _node(data, (a,), lambda g: (_unbroadcast(g * const, a.data.shape),))


def matmul(a: Tensor, b: Tensor):
    a, b = as_tensor(a), as_tensor(b)
    data = a.data @ b.data
    return _node(data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def power(a: Tensor, exponent: float):
    a = as_tensor(a)
    e = float(exponent)
    data = a.data ** e
    return _node(data, (a,), lambda g: (g * e * a.data ** (e - 1.0),))


def log(a: Tensor):
    a = as_tensor(a)
    return _node(np.log(a.data), (a,), lambda g: (g / a.data,))


def exp(a: Tensor):
    a = as_tensor(a)
    data = np.exp(a.data)
    return _node(data, (a,), lambda g: (g * data,))


def relu(a: Tensor):
    a = as_tensor(a)
    data = np.maximum(a.data, 0)
    return _node(data, (a,), lambda g: (g * (a.data > 0),))


def absolute(a: Tensor):
    a = as_tensor(a)
    return _node(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def _sigmoid_np(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _logsigmoid_np(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = -np.log1p(np.exp(-x[pos]))
    out[~pos] = x[~pos] - np.log1p(np.exp(x[~pos]))
    return out


def sigmoid(a: Tensor):
    a = as_tensor(a)
    s = _sigmoid_np(a.data)
    return _node(s, (a,), lambda g: (g * s * (1.0 - s),))


def logsigmoid(a: Tensor):
    """log(sigmoid(x)), computed stably; gradient is sigmoid(-x)."""
    a = as_tensor(a)
    data = _logsigmoid_np(a.data)
    return _node(data, (a,), lambda g: (g * _sigmoid_np(-a.data),))


def reduce_sum(a: Tensor, axis=None, keepdims=False):
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.data.shape),)

    return _node(data, (a,), backward)


def reduce_mean(a: Tensor, axis=None, keepdims=False):
    a = as_tensor(a)
    if axis is None:
        count = a.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([a.data.shape[i] for i in axes]))
    return mul(reduce_sum(a, axis, keepdims), 1.0 / max(count, 1))


def gather_rows(a: Tensor, idx):
    """out = a[idx]; repeated indices accumulate on backward."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    data = a.data[idx]

    def backward(g):
        buf = np.zeros_like(a.data)
        np.add.at(buf, idx, g)
        return (buf,)

    return _node(data, (a,), backward)


def scatter_rows(a: Tensor, idx, n_rows: int):
    """out[idx] = a into an n_rows buffer; idx must be unique."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    data = np.zeros((n_rows,) + a.data.shape[1:], dtype=a.data.dtype)
    data[idx] = a.data
    return _node(data, (a,), lambda g: (g[idx],))


def concat(tensors, axis=1):
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    splits = np.cumsum([t.data.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _node(data, tuple(tensors), backward)
