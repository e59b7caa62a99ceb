"""Grouped model parameters with per-group frozen flags."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import ContractError
from ..numerics import Rng, Tensor
from .bae import BaeHead
from .encoder import Encoder
from .unet import UNet

GROUPS = ("encoder", "bae", "denoiser")


@dataclass
class ModelBundle:
    """The three parameter groups: denoiser theta, encoder Phi, BAE Psi.

    During diffusion training Phi and Psi stay frozen; only theta trains.
    Freezing is enforced at the tensor level (requires_grad=False), so a
    frozen group can never accumulate gradients in the first place.
    """
    encoder: Encoder
    bae: BaeHead
    denoiser: UNet | None = None
    frozen: dict = field(default_factory=lambda: {g: False for g in GROUPS})

    def group_params(self, group: str) -> dict[str, Tensor]:
        if group == "encoder":
            return self.encoder.named_params("encoder")
        if group == "bae":
            return self.bae.named_params("bae")
        if group == "denoiser":
            if self.denoiser is None:
                return {}
            return self.denoiser.named_params("denoiser")
        raise ContractError(f"unknown parameter group {group!r}")

    def named_params(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for g in GROUPS:
            out.update(self.group_params(g))
        return out

    def set_frozen(self, group: str, flag: bool) -> None:
        for p in self.group_params(group).values():
            p.requires_grad = not flag
            p.grad = None
        self.frozen[group] = flag

    def trainable_params(self) -> dict[str, Tensor]:
        return {k: v for k, v in self.named_params().items() if v.requires_grad}


def build_bundle(seed: int, enc_channels: int = 32, enc_blocks: int = 3,
                 enc_growth: int = 16, unet_base: int = 32, emb_width: int = 128,
                 meta_dim: int = 16, with_denoiser: bool = True) -> ModelBundle:
    """Deterministic model construction from a single seed."""
    rng = Rng(seed)
    enc = Encoder(rng.child("encoder"), enc_channels, enc_blocks, enc_growth)
    bae = BaeHead(rng.child("bae"), enc_channels)
    den = None
    if with_denoiser:
        den = UNet(rng.child("denoiser"), base=unet_base, z_channels=enc_channels,
                   emb_width=emb_width, meta_dim=meta_dim)
    return ModelBundle(encoder=enc, bae=bae, denoiser=den)
