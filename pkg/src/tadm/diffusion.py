"""DDPM core: noise schedule, forward process, losses, ancestral sampler.

The forward process q(x_t | x_{t-1}) = N(sqrt(1-beta_t) x_{t-1}, beta_t I)
composes into the closed form x_t = sqrt(abar_t) x0 + sqrt(1-abar_t) eps
with abar_t the running product of alpha_t = 1 - beta_t.  The reverse
sampler uses the epsilon parameterization with fixed variance beta_t and
adds no noise at t = 1.

Step indices t are 1-based (t in [1, T]); schedule arrays are addressed at
t-1.  Several operations accept either a single t or one t per batch
element along the leading axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .numerics import Rng, Tensor, mean, mul, no_grad, sub

# canonical full-length schedule; shorter test schedules scale beta by
# 1000/T to keep the terminal signal-to-noise ratio, otherwise sampling
# from pure Gaussian noise would start far from the forward marginal
BETA_START = 1e-4
BETA_END = 0.02
FULL_T = 1000


@dataclass
class NoiseSchedule:
    T: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray


def build_schedule(T: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    """Linear beta schedule; alpha and alpha_bar derived in float64."""
    if T < 1:
        raise ConfigError(f"build_schedule: T must be >= 1, got {T}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ConfigError(
            f"build_schedule: need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    beta = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alpha = 1.0 - beta
    return NoiseSchedule(T=T, beta=beta, alpha=alpha, alpha_bar=np.cumprod(alpha))


def scaled_beta_range(T: int) -> tuple[float, float]:
    """Canonical betas rescaled for a T-step schedule (capped below 1)."""
    f = FULL_T / T
    return min(BETA_START * f, 0.5), min(BETA_END * f, 0.5)


def _check_t(t: int, T: int) -> int:
    t = int(t)
    if not 1 <= t <= T:
        raise ConfigError(f"step index t={t} outside [1, {T}]")
    return t


def _per_sample(values: np.ndarray, t, T: int, shape) -> np.ndarray:
    """Schedule values at t, broadcast to a tensor shape as float32."""
    if np.ndim(t) == 0:
        return np.full(shape, np.float32(values[_check_t(t, T) - 1]), np.float32)
    ts = np.asarray(t, dtype=np.int64)
    if ts.ndim != 1 or ts.shape[0] != shape[0]:
        raise ShapeError(f"per-sample t has shape {ts.shape}, batch has {shape[0]} elements")
    if ts.min() < 1 or ts.max() > T:
        raise ConfigError(f"step indices must lie in [1, {T}]")
    v = values[ts - 1].astype(np.float32).reshape((-1,) + (1,) * (len(shape) - 1))
    return np.broadcast_to(v, shape)


def forward_sample(x0: Tensor, t, eps: Tensor, sched: NoiseSchedule) -> Tensor:
    """Closed-form noised sample x_t; pure function of its arguments."""
    if x0.shape != eps.shape:
        raise ShapeError(f"forward_sample: x0 {x0.shape} vs eps {eps.shape}")
    ab = _per_sample(sched.alpha_bar, t, sched.T, x0.shape)
    return Tensor(np.sqrt(ab) * x0.data + np.sqrt(1.0 - ab) * eps.data)


def iterated_forward(x0: Tensor, t: int, rng: Rng, sched: NoiseSchedule) -> Tensor:
    """Literal t-step chain of q(x_s | x_{s-1}); the forward_sample oracle.

    t = 0 is the empty chain and returns x0 unchanged.
    """
    if t == 0:
        return Tensor(x0.data.copy())
    t = _check_t(t, sched.T)
    x = x0.data.astype(np.float32)
    for s in range(1, t + 1):
        b = np.float32(sched.beta[s - 1])
        x = np.sqrt(1.0 - b) * x + np.sqrt(b) * rng.normal(x.shape)
    return Tensor(x)


def ddpm_loss(eps_hat: Tensor, eps: Tensor) -> Tensor:
    """Mean squared error between predicted and injected noise."""
    d = sub(eps_hat, eps)
    return mean(mul(d, d))


def predict_x0(x_t: Tensor, eps_hat: Tensor, t, sched: NoiseSchedule) -> Tensor:
    """One-step clean estimate x0_hat = (x_t - sqrt(1-abar_t) eps_hat)/sqrt(abar_t).

    Differentiable in eps_hat; this is what feeds the auxiliary age loss.
    """
    if x_t.shape != eps_hat.shape:
        raise ShapeError(f"predict_x0: x_t {x_t.shape} vs eps_hat {eps_hat.shape}")
    ab = _per_sample(sched.alpha_bar, t, sched.T, x_t.shape)
    inv = Tensor(1.0 / np.sqrt(ab))
    coef = Tensor(np.sqrt(1.0 - ab) / np.sqrt(ab))
    return sub(mul(x_t, inv), mul(eps_hat, coef))


def _noise_like(shape, rng) -> np.ndarray:
    """Noise for one reverse step; a list of Rngs gives one independent
    stream per batch element, so results do not depend on batch grouping."""
    if isinstance(rng, Rng):
        return rng.normal(shape)
    if len(rng) != shape[0]:
        raise ShapeError(f"{len(rng)} rng streams for batch of {shape[0]}")
    return np.stack([r.normal(shape[1:]) for r in rng])


def reverse_step(x_t: Tensor, eps_hat: Tensor, t: int, sched: NoiseSchedule, rng) -> Tensor:
    """One ancestral step: mean via the epsilon parameterization, variance
    beta_t, and no noise term at t = 1."""
    if x_t.shape != eps_hat.shape:
        raise ShapeError(f"reverse_step: x_t {x_t.shape} vs eps_hat {eps_hat.shape}")
    t = _check_t(t, sched.T)
    b = sched.beta[t - 1]
    a = sched.alpha[t - 1]
    ab = sched.alpha_bar[t - 1]
    mu = (x_t.data - np.float32(b / np.sqrt(1.0 - ab)) * eps_hat.data) / np.float32(np.sqrt(a))
    if t == 1:
        return Tensor(mu)
    return Tensor(mu + np.float32(np.sqrt(b)) * _noise_like(x_t.shape, rng))


def sample(denoiser, cond, shape, sched: NoiseSchedule, rng) -> Tensor:
    """Full reverse chain T..1 from pure noise; returns the x0 estimate.

    ``denoiser(x_t, t_array, cond)`` must return an eps_hat tensor of the
    same shape; ``t_array`` holds one (identical) step index per batch
    element.  ``rng`` is a single Rng or one per batch element.
    """
    shape = tuple(int(s) for s in shape)
    with no_grad():
        x = Tensor(_noise_like(shape, rng))
        ts = np.empty(shape[0], dtype=np.int64)
        for t in range(sched.T, 0, -1):
            ts[:] = t
            eps_hat = denoiser(x, ts, cond)
            if eps_hat.shape != x.shape:
                raise ShapeError(f"denoiser returned {eps_hat.shape} for input {x.shape}")
            x = reverse_step(x, eps_hat, t, sched, rng)
    return x
