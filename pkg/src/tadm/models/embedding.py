"""Sinusoidal metadata embeddings and the learned condition projection.

The age gap, baseline age, cognitive status, and the diffusion step index
all enter the denoiser through the same Transformer-style positional
encoding; the three metadata sinusoids are concatenated and linearly
projected to the time-embedding width, then summed with the step
embedding.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, DomainError
from ..numerics import Rng, Tensor
from .layers import Linear

# how the age gap enters the conditioning vector
COND_GAP = "gap"                    # standard: sinusoid(delta)
COND_ABSOLUTE_AGE = "absolute_age"  # ablation: sinusoid(age + delta)
COND_NO_PATIENT = "no_patient"      # ablation: age/status embeddings zeroed
COND_MODES = (COND_GAP, COND_ABSOLUTE_AGE, COND_NO_PATIENT)


def sinusoidal_embed(value, dim: int) -> np.ndarray:
    """Positional encoding: entry 2i = sin(v / 10000^(2i/dim)), 2i+1 = cos.

    ``value`` may be a scalar (returns [dim]) or a vector (returns [N, dim]).
    """
    if dim % 2 or dim <= 0:
        raise ConfigError(f"sinusoidal_embed: dim must be even and positive, got {dim}")
    v = np.asarray(value, dtype=np.float64)
    scalar = v.ndim == 0
    v = np.atleast_1d(v)[:, None]
    freqs = 1.0 / np.power(10000.0, 2.0 * np.arange(dim // 2) / dim)
    ang = v * freqs
    out = np.empty((v.shape[0], dim), np.float32)
    out[:, 0::2] = np.sin(ang)
    out[:, 1::2] = np.cos(ang)
    return out[0] if scalar else out


def _check_status(status: np.ndarray) -> None:
    if not np.all(np.isin(status, (0.0, 1.0, 2.0))):
        raise DomainError(f"cognitive status must be 0, 1 or 2, got {status!r}")


class ConditionEmbed:
    """Learned projection of (delta, age, status) sinusoids.

    condition_vector() returns one row per batch element at the denoiser's
    time-embedding width.  The mode argument implements the conditioning
    ablations; the default is the plain age-gap conditioning.
    """

    def __init__(self, rng: Rng, meta_dim: int = 16, width: int = 128):
        if meta_dim % 2:
            raise ConfigError(f"meta_dim must be even, got {meta_dim}")
        self.meta_dim = meta_dim
        self.width = width
        self.proj = Linear(rng.child("cond_proj"), 3 * meta_dim, width)

    def meta_sinusoids(self, delta, age, status, mode: str = COND_GAP) -> np.ndarray:
        delta = np.atleast_1d(np.asarray(delta, np.float64))
        age = np.atleast_1d(np.asarray(age, np.float64))
        status = np.atleast_1d(np.asarray(status, np.float64))
        _check_status(status)
        if mode not in COND_MODES:
            raise ConfigError(f"unknown conditioning mode {mode!r}")
        first = age + delta if mode == COND_ABSOLUTE_AGE else delta
        parts = [sinusoidal_embed(first, self.meta_dim),
                 sinusoidal_embed(age, self.meta_dim),
                 sinusoidal_embed(status, self.meta_dim)]
        if mode == COND_NO_PATIENT:
            parts[1] = np.zeros_like(parts[1])
            parts[2] = np.zeros_like(parts[2])
        return np.concatenate(parts, axis=1)

    def condition_vector(self, delta, age, status, mode: str = COND_GAP) -> Tensor:
        return self.proj(Tensor(self.meta_sinusoids(delta, age, status, mode)))

    def named_params(self, prefix: str) -> dict[str, Tensor]:
        return self.proj.named_params(prefix + ".proj")
