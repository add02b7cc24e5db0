"""Adam optimizer with bias correction, operating on a model's parameter map."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch


def adam_step(model, gradients: dict[str, np.ndarray], lr: float = 1e-3,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One in-place update: p -= lr * m_hat / (sqrt(v_hat) + eps). Returns the model."""
    state = model.adam
    state.t += 1
    t = state.t
    for name, p in model.params.items():
        g = gradients.get(name)
        if g is None:
            raise ShapeMismatch(f"missing gradient for parameter {name!r}")
        if g.shape != p.shape:
            raise ShapeMismatch(f"gradient shape {g.shape} != parameter shape {p.shape} for {name!r}")
        g = g.astype(p.dtype, copy=False)
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p)
            state.m[name] = m
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * np.square(g)
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        p -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.dtype, copy=False)
    return model
