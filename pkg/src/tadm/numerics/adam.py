"""Adam optimizer over named parameter dicts.

Defaults follow common DDPM training practice: lr 2e-4, beta1 0.9,
beta2 0.999, eps 1e-8, with bias correction.  Frozen parameters
(requires_grad=False) are never touched and never need gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError
from .tensor import Tensor


@dataclass
class AdamState:
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], state: AdamState) -> None:
    """One Adam update over every trainable param; clears all grads."""
    state.step += 1
    b1 = np.float32(state.beta1)
    b2 = np.float32(state.beta2)
    c1 = np.float32(1.0 - state.beta1 ** state.step)
    c2 = np.float32(1.0 - state.beta2 ** state.step)
    lr = np.float32(state.lr)
    eps = np.float32(state.eps)
    for name, p in params.items():
        if not p.requires_grad:
            p.grad = None
            continue
        if p.grad is None:
            raise ContractError(f"adam_step: trainable param {name!r} has no grad")
        g = p.grad
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
        p.grad = None
