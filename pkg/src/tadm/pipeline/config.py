"""Run configuration: a flat key=value file plus CLI overrides.

One `key = value` per line, `#` starts a comment, unknown keys are a
startup error rather than a silent ignore.  The resolved config is saved
next to every checkpoint (same format, `<ckpt>.cfg`) so that inference
and evaluation can rebuild the exact model without guessing.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass

from ..diffusion import NoiseSchedule, build_schedule, scaled_beta_range
from ..errors import ConfigError
from ..models.embedding import COND_MODES


@dataclass
class TrainConfig:
    seed: int = 0
    image_size: int = 64
    # diffusion; beta range 0 means "derive from t_steps" (canonical
    # 1000-step range rescaled so cumulative noising is preserved)
    t_steps: int = 50
    beta_start: float = 0.0
    beta_end: float = 0.0
    # denoiser training
    steps: int = 1500
    batch_size: int = 8
    lr: float = 2e-4
    # denoiser weights are checkpointed as an exponential moving average
    # (warmed up, so short runs degrade to the raw weights); 0 disables
    ema_decay: float = 0.999
    lambda_bae: float = 0.05
    # age-gap loss applies to batch elements with t <= bae_t_limit;
    # 0 means the default 3*t_steps/10, t_steps applies it everywhere
    bae_t_limit: int = 0
    cond_mode: str = "gap"
    # BAE pretraining; the noise augmentation keeps the frozen regressor
    # well-behaved on generated images, which are never perfectly clean
    pretrain_steps: int = 600
    pretrain_batch: int = 8
    pretrain_lr: float = 1e-3
    pretrain_noise: float = 0.08
    # architecture
    enc_channels: int = 32
    enc_blocks: int = 3
    enc_growth: int = 16
    unet_base: int = 32
    emb_width: int = 128
    meta_dim: int = 16
    eval_batch: int = 12

    def validate(self) -> "TrainConfig":
        positive = ("image_size", "t_steps", "steps", "batch_size", "lr",
                    "pretrain_steps", "pretrain_batch", "pretrain_lr",
                    "enc_channels", "enc_blocks", "enc_growth", "unet_base",
                    "emb_width", "meta_dim", "eval_batch")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"config: {name} must be positive")
        for name in ("seed", "beta_start", "beta_end", "lambda_bae", "bae_t_limit",
                     "pretrain_noise"):
            if getattr(self, name) < 0:
                raise ConfigError(f"config: {name} must be non-negative")
        if (self.beta_start == 0.0) != (self.beta_end == 0.0):
            raise ConfigError("config: set both beta_start and beta_end or neither")
        if not 0.0 <= self.ema_decay < 1.0:
            raise ConfigError("config: ema_decay must be in [0, 1)")
        if self.cond_mode not in COND_MODES:
            raise ConfigError(f"config: cond_mode {self.cond_mode!r} not one of {COND_MODES}")
        if self.meta_dim % 2 or self.emb_width % 2:
            raise ConfigError("config: meta_dim and emb_width must be even")
        return self

    def schedule(self) -> NoiseSchedule:
        b0, b1 = (self.beta_start, self.beta_end)
        if b0 == 0.0:
            b0, b1 = scaled_beta_range(self.t_steps)
        return build_schedule(self.t_steps, b0, b1)


_FIELDS = {f.name: f.type for f in dataclasses.fields(TrainConfig)}


def _convert(key: str, raw: str):
    kind = _FIELDS[key]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError as e:
        raise ConfigError(f"config: bad value for {key}: {raw!r}") from e


def apply_overrides(cfg: TrainConfig, sets: list[str]) -> TrainConfig:
    """Apply `key=value` strings (CLI --set) on top of a config."""
    for item in sets:
        if "=" not in item:
            raise ConfigError(f"config: override {item!r} is not key=value")
        key, _, raw = item.partition("=")
        key, raw = key.strip(), raw.strip()
        if key not in _FIELDS:
            raise ConfigError(f"config: unknown key {key!r}")
        setattr(cfg, key, _convert(key, raw))
    return cfg


def parse_config(path: str | None = None, sets: list[str] | None = None) -> TrainConfig:
    cfg = TrainConfig()
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as f:
                lines = f.read().splitlines()
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        for ln, line in enumerate(lines, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{ln}: expected key = value")
            key, _, raw = line.partition("=")
            key, raw = key.strip(), raw.strip()
            if key not in _FIELDS:
                raise ConfigError(f"{path}:{ln}: unknown key {key!r}")
            setattr(cfg, key, _convert(key, raw))
    apply_overrides(cfg, sets or [])
    return cfg.validate()


def save_config(cfg: TrainConfig, path: str) -> None:
    lines = [f"{f.name} = {getattr(cfg, f.name)}" for f in dataclasses.fields(TrainConfig)]
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def sidecar_path(ckpt_path: str) -> str:
    return ckpt_path + ".cfg"
