"""Adam with bias correction."""

from __future__ import annotations

import numpy as np


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One Adam update; params are modified in place and returned.

    `params` and `grads` map names to arrays; `state` holds the shared step
    counter plus first/second moments per name (created on first use).
    """
    t = state.get("t", 0) + 1
    state["t"] = t
    m_state = state.setdefault("m", {})
    v_state = state.setdefault("v", {})
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=p.dtype)
        m = m_state.get(name)
        v = v_state.get(name)
        if m is None:
            m = np.zeros_like(p)
            v = np.zeros_like(p)
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        m_state[name] = m
        v_state[name] = v
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return params, state


class Adam:
    """Adam over named parameter Tensors; reads .grad, writes via assign()."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        # params: OrderedDict name -> Tensor
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.state = {}

    def step(self, lr=None):
        lr = self.lr if lr is None else lr
        values = {}
        grads = {}
        for name, p in self.params.items():
            if p.grad is None:
                continue
            values[name] = p.data.copy()
            grads[name] = p.grad
        adam_step(values, grads, self.state, lr, self.beta1, self.beta2,
                  self.eps)
        for name, arr in values.items():
            self.params[name].assign(arr)

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()
