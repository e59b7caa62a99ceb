"""BAE pretraining and the combined-loss diffusion training loop.

Training order is fixed: the encoder Phi and age head Psi are fitted
first as a plain age regressor, then frozen; the denoiser theta is the
only thing the diffusion loop updates.  The auxiliary loss compares the
BAE's estimated age gap on the one-step denoised prediction against the
true gap, expressed in years so its scale is commensurate with the noise
MSE, and enters the total as lambda_bae * that.
"""

from __future__ import annotations

import os

import numpy as np

from ..diffusion import ddpm_loss, forward_sample, predict_x0
from ..errors import CheckpointError, ConfigError, DataError
from ..models import (AGE_HALF_RANGE, ConditioningBundle, ModelBundle,
                      build_bundle, load_checkpoint, load_into, save_checkpoint)
from ..numerics import (AdamState, Rng, Tensor, adam_step, derive_seed, mean,
                        mul, no_grad, sum_all)
from ..phantom import Dataset
from .config import TrainConfig, save_config, sidecar_path
from .data import PairBatch, batch_from_pairs, pairs_from_dataset


def _build(cfg: TrainConfig, seed: int, with_denoiser: bool) -> ModelBundle:
    return build_bundle(seed, enc_channels=cfg.enc_channels, enc_blocks=cfg.enc_blocks,
                        enc_growth=cfg.enc_growth, unet_base=cfg.unet_base,
                        emb_width=cfg.emb_width, meta_dim=cfg.meta_dim,
                        with_denoiser=with_denoiser)


def estimate_age_gap(z_a: Tensor, z_b_hat: Tensor, bae) -> Tensor:
    """Predicted gap in months: BAE age of follow-up minus of baseline."""
    return bae(z_b_hat) - bae(z_a)


def pretrain_bae(ds: Dataset, cfg: TrainConfig, ckpt_out: str | None = None):
    """Fit Phi+Psi as an age regressor on train-split scans, then freeze.

    Returns (bundle, per-step losses).  The loss is squared error on the
    age normalized to the half-range, so it starts near 0.3 and is
    comparable across datasets.

    Inputs are perturbed with Gaussian noise of a per-sample random
    amplitude up to cfg.pretrain_noise.  The frozen BAE is only ever
    applied to generated follow-ups downstream, and a regressor fit on
    clean images alone is wildly unreliable (in value and in gradient) on
    such inputs; the augmentation makes it read anatomy through the noise.
    """
    scans = ds.scans("train")
    if not scans:
        raise DataError("pretrain: no training scans in dataset")
    images = np.stack([ds.load_image(r) for r in scans])[..., None].astype(np.float32)
    ages = np.array([r.age_months for r in scans], np.float64)

    bundle = _build(cfg, derive_seed(cfg.seed, "bae-init"), with_denoiser=False)
    params = {**bundle.group_params("encoder"), **bundle.group_params("bae")}
    state = AdamState(lr=cfg.pretrain_lr)
    batch_rng = Rng(derive_seed(cfg.seed, "pretrain", "batch"))
    noise_rng = Rng(derive_seed(cfg.seed, "pretrain", "noise"))
    losses = []
    for _ in range(cfg.pretrain_steps):
        idx = batch_rng.integers(0, len(scans), cfg.pretrain_batch)
        x = images[idx]
        if cfg.pretrain_noise > 0:
            amp = noise_rng.uniform(0.0, cfg.pretrain_noise, (len(idx), 1, 1, 1))
            x = x + amp * noise_rng.normal(x.shape)
        x = Tensor(x)
        target = Tensor(ages[idx].astype(np.float32))
        err = (bundle.bae(bundle.encoder(x)) - target) * (1.0 / AGE_HALF_RANGE)
        loss = mean(mul(err, err))
        loss.backward()
        adam_step(params, state)
        losses.append(loss.item())

    bundle.set_frozen("encoder", True)
    bundle.set_frozen("bae", True)
    if ckpt_out is not None:
        save_checkpoint(ckpt_out, params)
        save_config(cfg, sidecar_path(ckpt_out))
    return bundle, losses


def bae_mae(bundle: ModelBundle, ds: Dataset, split: str, batch: int = 32) -> float:
    """Mean absolute age error in months over a split."""
    recs = ds.scans(split)
    if not recs:
        raise DataError(f"no scans in split {split!r}")
    errs = []
    with no_grad():
        for i in range(0, len(recs), batch):
            chunk = recs[i:i + batch]
            x = Tensor(np.stack([ds.load_image(r) for r in chunk])[..., None].astype(np.float32))
            pred = bundle.bae(bundle.encoder(x)).data.astype(np.float64)
            errs.extend(np.abs(pred - np.array([r.age_months for r in chunk])))
    return float(np.mean(errs))


def train_step(bundle: ModelBundle, sched, batch: PairBatch, cfg: TrainConfig,
               state: AdamState, t_rng: Rng, noise_rng: Rng):
    """One combined-loss update of theta; returns (dml, bae, total) floats."""
    n = batch.base.shape[0]
    ts = t_rng.integers(1, sched.T + 1, n)
    eps = Tensor(noise_rng.normal(batch.base.shape))
    with no_grad():
        z_a = bundle.encoder(Tensor(batch.base))

    x_t = forward_sample(Tensor(batch.residual), ts, eps, sched)
    cond = ConditioningBundle(z_a=z_a, delta=batch.delta, age=batch.age,
                              status=batch.status, mode=cfg.cond_mode)
    eps_hat = bundle.denoiser(x_t, ts, cond)
    loss_dml = ddpm_loss(eps_hat, eps)

    loss_bae = None
    if cfg.lambda_bae > 0.0:
        # The one-step x0 estimate amplifies denoiser error by
        # sqrt((1-abar)/abar), which explodes for large t (360x at t=T for
        # the default 50-step schedule) and would drown the noise MSE in
        # garbage gradients early in training.  The age-gap loss therefore
        # applies only at low t, where the estimate approximates the final
        # sample; 3T/10 keeps the amplification near 1.
        limit = cfg.bae_t_limit if cfg.bae_t_limit > 0 else (3 * sched.T) // 10
        w = (ts <= limit).astype(np.float32)
        if w.sum() > 0:
            x0_hat = predict_x0(x_t, eps_hat, ts, sched)
            pred_b = Tensor(batch.base) + x0_hat
            with no_grad():
                age_a = bundle.bae(z_a)
            gap_hat = bundle.bae(bundle.encoder(pred_b)) - age_a
            err_years = (gap_hat - Tensor(batch.delta.astype(np.float32))) * (1.0 / 12.0)
            sq = mul(err_years, err_years)
            loss_bae = sum_all(mul(sq, Tensor(w * (1.0 / w.sum()))))

    if loss_bae is not None:
        total = loss_dml + loss_bae * cfg.lambda_bae
    else:
        total = loss_dml
    total.backward()
    adam_step(bundle.trainable_params(), state)

    dml = loss_dml.item()
    bae = loss_bae.item() if loss_bae is not None else 0.0
    return dml, bae, dml + cfg.lambda_bae * bae


def train(ds: Dataset, cfg: TrainConfig, bae_ckpt: str, ckpt_out: str,
          log_out: str | None = None):
    """Full diffusion training; writes checkpoint, config sidecar, and log.

    Returns (bundle, history) where history rows are (step, dml, bae).
    """
    if not os.path.isfile(bae_ckpt):
        raise ConfigError(f"missing BAE checkpoint: {bae_ckpt}")
    pretrained = load_checkpoint(bae_ckpt)
    for group in ("encoder", "bae"):
        if not any(k.startswith(group + ".") for k in pretrained):
            raise CheckpointError(f"{bae_ckpt}: no {group} parameters in checkpoint")

    pairs = pairs_from_dataset(ds, "train")
    if not pairs:
        raise DataError("train: no training pairs in dataset")

    bundle = _build(cfg, cfg.seed, with_denoiser=True)
    named = bundle.named_params()
    load_into(named, pretrained, prefix="encoder.")
    load_into(named, pretrained, prefix="bae.")
    bundle.set_frozen("encoder", True)
    bundle.set_frozen("bae", True)

    sched = cfg.schedule()
    state = AdamState(lr=cfg.lr)
    batch_rng = Rng(derive_seed(cfg.seed, "train", "batch"))
    t_rng = Rng(derive_seed(cfg.seed, "train", "t"))
    noise_rng = Rng(derive_seed(cfg.seed, "train", "noise"))

    theta = bundle.group_params("denoiser")
    ema = {k: p.data.copy() for k, p in theta.items()} if cfg.ema_decay > 0 else None
    history = []
    for step in range(1, cfg.steps + 1):
        # cosine decay to 5%: ancestral samples are visibly cleaner when
        # the last phase of training runs at a small learning rate
        state.lr = cfg.lr * (0.05 + 0.95 * 0.5 * (1 + np.cos(np.pi * step / cfg.steps)))
        idx = batch_rng.integers(0, len(pairs), cfg.batch_size)
        batch = batch_from_pairs(pairs, idx)
        dml, bae, _tot = train_step(bundle, sched, batch, cfg, state, t_rng, noise_rng)
        history.append((step, dml, bae))
        if ema is not None:
            # decay capped at a horizon of steps/5 so short runs forget the
            # initial weights; the step/(step+1) warmup kills init bias
            d = max(0.0, min(cfg.ema_decay, 1.0 - 5.0 / cfg.steps, step / (step + 1.0)))
            for k, p in theta.items():
                ema[k] += (1.0 - d) * (p.data - ema[k])

    if ema is not None:
        for k, p in theta.items():
            p.data[...] = ema[k]
    save_checkpoint(ckpt_out, bundle.named_params())
    save_config(cfg, sidecar_path(ckpt_out))
    if log_out is not None:
        write_log(log_out, history)
    return bundle, history


def write_log(path: str, history) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        f.write("step,loss_dml,loss_bae\n")
        for step, dml, bae in history:
            f.write(f"{step},{dml:.8g},{bae:.8g}\n")
    os.replace(tmp, path)


def load_bundle(ckpt_path: str, cfg: TrainConfig) -> ModelBundle:
    """Rebuild a model from checkpoint + config and load all groups."""
    loaded = load_checkpoint(ckpt_path)
    with_den = any(k.startswith("denoiser.") for k in loaded)
    bundle = _build(cfg, cfg.seed, with_denoiser=with_den)
    load_into(bundle.named_params(), loaded)
    bundle.set_frozen("encoder", True)
    bundle.set_frozen("bae", True)
    return bundle
