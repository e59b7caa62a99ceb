"""Conditional U-Net denoiser G_theta.

Three resolution levels (base width x 1, 2, 4), two residual blocks per
level, GroupNorm + SiLU throughout, average-pool downsampling and
nearest-neighbour upsampling with skip concatenation.  The encoder
features z_a are fused right after the first convolution by channel
concatenation followed by a 1x1 convolution back to the stage width.
The diffusion step index is embedded sinusoidally, summed with the
learned condition vector for (delta, age, status), passed through a small
MLP, and injected into every residual block as a per-channel offset.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError
from ..numerics import (Rng, Tensor, add_channel_vec, avg_pool2, concat, silu,
                        upsample2)
from .embedding import COND_GAP, ConditionEmbed, sinusoidal_embed
from .layers import Conv, GroupNorm, Linear, collect


@dataclass
class ConditioningBundle:
    """Everything the denoiser is conditioned on, batched.

    z_a: encoder features of the baseline scans, [N,H,W,C] tensor.
    delta/age/status: one value per batch element, months and {0,1,2}.
    mode: conditioning variant (see embedding module); ablations only.
    """
    z_a: Tensor
    delta: np.ndarray
    age: np.ndarray
    status: np.ndarray
    mode: str = COND_GAP


class ResBlock:
    def __init__(self, rng: Rng, cin: int, cout: int, emb_width: int):
        self.gn1 = GroupNorm(cin)
        self.conv1 = Conv(rng.child("conv1"), cin, cout)
        self.emb = Linear(rng.child("emb"), emb_width, cout)
        self.gn2 = GroupNorm(cout)
        self.conv2 = Conv(rng.child("conv2"), cout, cout)
        self.skip = Conv(rng.child("skip"), cin, cout, k=1) if cin != cout else None

    def __call__(self, x: Tensor, emb: Tensor) -> Tensor:
        h = self.conv1(silu(self.gn1(x)))
        h = add_channel_vec(h, self.emb(emb))
        h = self.conv2(silu(self.gn2(h)))
        return h + (self.skip(x) if self.skip is not None else x)

    def named_params(self, prefix: str) -> dict[str, Tensor]:
        pairs = [(prefix + ".gn1", self.gn1), (prefix + ".conv1", self.conv1),
                 (prefix + ".emb", self.emb), (prefix + ".gn2", self.gn2),
                 (prefix + ".conv2", self.conv2)]
        if self.skip is not None:
            pairs.append((prefix + ".skip", self.skip))
        return collect(*pairs)


class UNet:
    def __init__(self, rng: Rng, base: int = 32, mults: tuple = (1, 2, 4),
                 z_channels: int = 32, emb_width: int = 128, meta_dim: int = 16,
                 blocks_per_level: int = 2):
        self.emb_width = emb_width
        self.cond = ConditionEmbed(rng.child("cond"), meta_dim, emb_width)
        self.emb_fc1 = Linear(rng.child("emb_fc1"), emb_width, emb_width)
        self.emb_fc2 = Linear(rng.child("emb_fc2"), emb_width, emb_width)
        widths = [base * m for m in mults]
        self.widths = widths
        self.head = Conv(rng.child("head"), 1, base)
        self.fuse = Conv(rng.child("fuse"), base + z_channels, base, k=1)

        self.down = []
        cin = base
        for i, w in enumerate(widths):
            level = []
            for j in range(blocks_per_level):
                level.append(ResBlock(rng.child("down", i, j), cin, w, emb_width))
                cin = w
            self.down.append(level)
        self.mid = ResBlock(rng.child("mid"), widths[-1], widths[-1], emb_width)
        self.up = []
        for i in reversed(range(len(widths))):
            w = widths[i]
            level = [ResBlock(rng.child("up", i, 0), cin + w, w, emb_width)]
            for j in range(1, blocks_per_level):
                level.append(ResBlock(rng.child("up", i, j), w, w, emb_width))
            self.up.append(level)
            cin = w
        self.tail_norm = GroupNorm(base)
        # zero-init output conv: the denoiser starts as the zero function,
        # which keeps early training stable
        self.tail = Conv(rng.child("tail"), base, 1, zero=True)

    def _embed(self, t, cond: ConditioningBundle) -> Tensor:
        te = Tensor(sinusoidal_embed(np.asarray(t, np.float64), self.emb_width))
        cv = self.cond.condition_vector(cond.delta, cond.age, cond.status, cond.mode)
        e = self.emb_fc2(silu(self.emb_fc1(te + cv)))
        return e

    def __call__(self, x_t: Tensor, t, cond: ConditioningBundle) -> Tensor:
        if x_t.data.ndim != 4 or x_t.shape[3] != 1:
            raise ShapeError(f"denoiser expects [N,H,W,1], got {x_t.shape}")
        if cond.z_a.shape[:3] != x_t.shape[:3]:
            raise ShapeError(
                f"z_a shape {cond.z_a.shape} does not match input {x_t.shape}")
        emb = self._embed(t, cond)
        h = self.head(x_t)
        h = self.fuse(concat([h, cond.z_a], axis=3))
        skips = []
        for i, level in enumerate(self.down):
            for blk in level:
                h = blk(h, emb)
            skips.append(h)
            if i < len(self.down) - 1:
                h = avg_pool2(h)
        h = self.mid(h, emb)
        for i, level in enumerate(self.up):
            h = concat([h, skips[len(skips) - 1 - i]], axis=3)
            for blk in level:
                h = blk(h, emb)
            if i < len(self.up) - 1:
                h = upsample2(h)
        return self.tail(silu(self.tail_norm(h)))

    def named_params(self, prefix: str = "denoiser") -> dict[str, Tensor]:
        out = self.cond.named_params(prefix + ".cond")
        out.update(self.emb_fc1.named_params(prefix + ".emb_fc1"))
        out.update(self.emb_fc2.named_params(prefix + ".emb_fc2"))
        out.update(self.head.named_params(prefix + ".head"))
        out.update(self.fuse.named_params(prefix + ".fuse"))
        for i, level in enumerate(self.down):
            for j, blk in enumerate(level):
                out.update(blk.named_params(f"{prefix}.down{i}.{j}"))
        out.update(self.mid.named_params(prefix + ".mid"))
        for i, level in enumerate(self.up):
            for j, blk in enumerate(level):
                out.update(blk.named_params(f"{prefix}.up{i}.{j}"))
        out.update(self.tail_norm.named_params(prefix + ".tail_norm"))
        out.update(self.tail.named_params(prefix + ".tail"))
        return out
