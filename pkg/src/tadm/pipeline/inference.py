"""Arbitrary-gap inference: sample a residual, add it to the baseline."""

from __future__ import annotations

import numpy as np

from ..diffusion import NoiseSchedule, sample
from ..errors import DomainError, ShapeError
from ..models import COND_GAP, ConditioningBundle, ModelBundle
from ..numerics import Rng, Tensor, no_grad


def infer_batch(bundle: ModelBundle, sched: NoiseSchedule, images: np.ndarray,
                deltas, ages, statuses, rngs, cond_mode: str = COND_GAP) -> np.ndarray:
    """Predict follow-ups for a batch of baselines; returns [N,H,W] in [0,1].

    ``rngs`` is one Rng or a list of one per image.  With per-image rngs the
    noise driving image i depends only on rngs[i]; batched and one-at-a-time
    predictions then agree to float32 rounding (GEMM summation order shifts
    with the batch shape), and a fixed batching is bit-deterministic.
    """
    if images.ndim != 3:
        raise ShapeError(f"infer expects [N,H,W] baselines, got {images.shape}")
    deltas = np.asarray(deltas, np.float64)
    if np.any(deltas < 0):
        raise DomainError(f"negative age gap: {deltas.min()}")
    with no_grad():
        z_a = bundle.encoder(Tensor(images[..., None].astype(np.float32)))
    cond = ConditioningBundle(z_a=z_a, delta=deltas,
                              age=np.asarray(ages, np.float64),
                              status=np.asarray(statuses, np.int64),
                              mode=cond_mode)
    residual = sample(bundle.denoiser, cond, images.shape + (1,), sched, rngs)
    pred = images.astype(np.float32) + residual.data[..., 0]
    return np.clip(pred, 0.0, 1.0)


def infer(bundle: ModelBundle, sched: NoiseSchedule, image: np.ndarray,
          delta: float, age: float, status: int, rng: Rng,
          cond_mode: str = COND_GAP) -> np.ndarray:
    """Single-image inference; returns the predicted follow-up [H,W]."""
    if image.ndim != 2:
        raise ShapeError(f"infer expects one [H,W] baseline, got {image.shape}")
    return infer_batch(bundle, sched, image[None], [delta], [age], [status],
                       [rng], cond_mode)[0]
