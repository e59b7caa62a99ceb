"""Finite-difference verification of the autodiff tape.

grad_check runs a model fragment twice per probed entry with a central
difference and compares against the taped gradient.  Relative error uses
max(1, |a|, |b|) in the denominator so near-zero gradients are judged on
an absolute scale; 1e-3 is an appropriate bar for float32 with h=1e-3.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import Rng
from .tensor import Tensor, no_grad


@dataclass
class GradCheckReport:
    max_rel_err: float
    worst_param: str
    worst_index: int
    checked: int

    def ok(self, tolerance: float = 1e-3) -> bool:
        return self.max_rel_err < tolerance


def grad_check(fragment, tensors: dict[str, Tensor], h: float = 1e-3,
               max_probes_per_tensor: int = 8, rng: Rng | None = None) -> GradCheckReport:
    """Compare autodiff grads of ``fragment(  )`` against central differences.

    ``fragment`` is a zero-argument callable returning a scalar Tensor and
    must be a pure function of the entries of ``tensors``.  Tensors with at
    most ``max_probes_per_tensor`` entries are probed exhaustively, larger
    ones at deterministically sampled indices.
    """
    rng = rng if rng is not None else Rng(0)
    for t in tensors.values():
        t.grad = None
    loss = fragment()
    loss.backward()
    auto = {k: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
            for k, t in tensors.items()}

    worst = 0.0
    worst_param = ""
    worst_index = -1
    checked = 0
    with no_grad():
        for name, t in tensors.items():
            flat = t.data.reshape(-1)
            n = flat.size
            if n <= max_probes_per_tensor:
                idx = np.arange(n)
            else:
                idx = np.unique(rng.integers(0, n, (max_probes_per_tensor,)))
            for i in idx:
                keep = flat[i]
                flat[i] = keep + h
                up = fragment().item()
                flat[i] = keep - h
                down = fragment().item()
                flat[i] = keep
                fd = (up - down) / (2.0 * h)
                ad = float(auto[name].reshape(-1)[i])
                rel = abs(ad - fd) / max(1.0, abs(ad), abs(fd))
                checked += 1
                if rel > worst:
                    worst, worst_param, worst_index = rel, name, int(i)
    for t in tensors.values():
        t.grad = None
    return GradCheckReport(worst, worst_param, worst_index, checked)
