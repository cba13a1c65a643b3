"""Adam optimizer over a dict of parameter tensors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def optimizer_step(tensors: dict, grads: dict, state: AdamState) -> None:
    """One in-place Adam update of ``tensors``."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for key, w in tensors.items():
        g = grads[key]
        m = state.m.get(key)
        if m is None:
            m = state.m[key] = np.zeros_like(w)
            state.v[key] = np.zeros_like(w)
        v = state.v[key]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        w -= (state.lr / c1) * m / (np.sqrt(v / c2) + state.eps)
