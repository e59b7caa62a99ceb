"""Neural blocks: metadata embedding, encoder Phi, BAE head Psi, U-Net G."""

from .bae import AGE_HALF_RANGE, AGE_MID_MONTHS, BaeHead
from .bundle import GROUPS, ModelBundle, build_bundle
from .checkpoint import load_checkpoint, load_into, save_checkpoint
from .embedding import (COND_ABSOLUTE_AGE, COND_GAP, COND_MODES,
                        COND_NO_PATIENT, ConditionEmbed, sinusoidal_embed)
from .encoder import DenseBlock, Encoder
from .layers import Conv, GroupNorm, Linear
from .unet import ConditioningBundle, ResBlock, UNet

__all__ = [
    "AGE_HALF_RANGE",
    "AGE_MID_MONTHS",
    "BaeHead",
    "COND_ABSOLUTE_AGE",
    "COND_GAP",
    "COND_MODES",
    "COND_NO_PATIENT",
    "ConditionEmbed",
    "ConditioningBundle",
    "Conv",
    "DenseBlock",
    "Encoder",
    "GROUPS",
    "GroupNorm",
    "Linear",
    "ModelBundle",
    "ResBlock",
    "UNet",
    "build_bundle",
    "load_checkpoint",
    "load_into",
    "save_checkpoint",
]
