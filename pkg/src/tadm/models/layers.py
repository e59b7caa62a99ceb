"""Small parameterized layers shared by the encoder, BAE head, and U-Net.

All image activations are channels-last [N,H,W,C]; Conv keeps its kernel
directly in the [kh*kw*cin, cout] matrix form the convolution consumes.
"""

from __future__ import annotations

import numpy as np

from ..numerics import Rng, Tensor, add_bias, conv2d_nhwc, group_norm, matmul


class Conv:
    """k x k "same" convolution with bias, He-normal init (zero optional)."""

    def __init__(self, rng: Rng, cin: int, cout: int, k: int = 3, zero: bool = False):
        self.k = k
        if zero:
            w = np.zeros((k * k * cin, cout), np.float32)
        else:
            w = rng.normal((k * k * cin, cout)) * np.float32(np.sqrt(2.0 / (cin * k * k)))
        self.w = Tensor(w, requires_grad=True)
        self.b = Tensor(np.zeros(cout, np.float32), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d_nhwc(x, self.w, self.b, self.k, self.k)

    def named_params(self, prefix: str) -> dict[str, Tensor]:
        return {prefix + ".w": self.w, prefix + ".b": self.b}


class Linear:
    """Dense layer [N,in] -> [N,out] with bias."""

    def __init__(self, rng: Rng, cin: int, cout: int):
        w = rng.normal((cin, cout)) * np.float32(np.sqrt(1.0 / cin))
        self.w = Tensor(w, requires_grad=True)
        self.b = Tensor(np.zeros(cout, np.float32), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return add_bias(matmul(x, self.w), self.b)

    def named_params(self, prefix: str) -> dict[str, Tensor]:
        return {prefix + ".w": self.w, prefix + ".b": self.b}


class GroupNorm:
    """Group normalization with learned per-channel affine."""

    def __init__(self, channels: int, groups: int = 8):
        self.groups = groups
        self.gamma = Tensor(np.ones(channels, np.float32), requires_grad=True)
        self.beta = Tensor(np.zeros(channels, np.float32), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return group_norm(x, self.groups, self.gamma, self.beta)

    def named_params(self, prefix: str) -> dict[str, Tensor]:
        return {prefix + ".gamma": self.gamma, prefix + ".beta": self.beta}


def collect(*pairs) -> dict[str, Tensor]:
    """Merge (prefix, layer) pairs into one named-param dict."""
    out: dict[str, Tensor] = {}
    for prefix, layer in pairs:
        out.update(layer.named_params(prefix))
    return out
