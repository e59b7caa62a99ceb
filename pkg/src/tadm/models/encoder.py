"""RRDB-style image encoder producing the conditioning features z_a.

Resolution-preserving: a head convolution lifts the single-channel image
to C features, then K blocks refine them.  Each block is three densely
connected convolutional units whose fused output is scaled by 0.2 and
added back through the block's outer residual connection.
"""

from __future__ import annotations

from ..errors import ShapeError
from ..numerics import Rng, Tensor, concat, silu
from .layers import Conv, collect

RESIDUAL_SCALE = 0.2


class DenseBlock:
    """Three dense units: C -> g, C+g -> g, C+2g -> C, outer residual."""

    def __init__(self, rng: Rng, channels: int, growth: int):
        self.u1 = Conv(rng.child("u1"), channels, growth)
        self.u2 = Conv(rng.child("u2"), channels + growth, growth)
        self.u3 = Conv(rng.child("u3"), channels + 2 * growth, channels)

    def __call__(self, x: Tensor) -> Tensor:
        a = silu(self.u1(x))
        b = silu(self.u2(concat([x, a], axis=3)))
        c = self.u3(concat([x, a, b], axis=3))
        return x + c * RESIDUAL_SCALE

    def named_params(self, prefix: str) -> dict[str, Tensor]:
        return collect((prefix + ".u1", self.u1), (prefix + ".u2", self.u2),
                       (prefix + ".u3", self.u3))


class Encoder:
    """Phi: [N,H,W,1] image in [0,1] -> [N,H,W,C] features."""

    def __init__(self, rng: Rng, channels: int = 32, blocks: int = 3, growth: int = 16):
        self.channels = channels
        self.head = Conv(rng.child("head"), 1, channels)
        self.blocks = [DenseBlock(rng.child("block", i), channels, growth)
                       for i in range(blocks)]

    def __call__(self, image: Tensor) -> Tensor:
        if image.data.ndim == 3 and image.shape[2] == 1:
            from ..numerics import reshape
            image = reshape(image, (1,) + image.shape)
        if image.data.ndim != 4 or image.shape[3] != 1:
            raise ShapeError(f"encoder expects [N,H,W,1] or [H,W,1], got {image.shape}")
        h = self.head(image)
        for blk in self.blocks:
            h = blk(h)
        return h

    def named_params(self, prefix: str = "encoder") -> dict[str, Tensor]:
        out = self.head.named_params(prefix + ".head")
        for i, blk in enumerate(self.blocks):
            out.update(blk.named_params(f"{prefix}.block{i}"))
        return out
