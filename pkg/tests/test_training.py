"""Pretraining and diffusion-training loop behaviour."""

import numpy as np
import pytest

from conftest import clone_config
from tadm.errors import CheckpointError, ConfigError, DataError
from tadm.models import build_bundle, load_checkpoint, save_checkpoint
from tadm.numerics import AdamState, Rng, Tensor
from tadm.pipeline import (TrainConfig, batch_from_pairs, bae_mae,
                           estimate_age_gap, infer, pairs_from_dataset,
                           parse_config, pretrain_bae, sidecar_path, train,
                           train_step, load_bundle)
from tadm.pipeline.training import write_log


@pytest.fixture(scope="module")
def trained(tmp_path_factory, small_dataset):
    """One tiny pretrain+train run shared by the read-only tests below."""
    root = tmp_path_factory.mktemp("train")
    cfg = TrainConfig(seed=3, image_size=24, t_steps=8, steps=3, batch_size=2,
                      lambda_bae=0.05, pretrain_steps=3, pretrain_batch=2,
                      enc_channels=8, enc_blocks=1, enc_growth=4, unet_base=8,
                      emb_width=32, meta_dim=8)
    bae_ckpt = str(root / "bae.ckpt")
    pretrain_bae(small_dataset, cfg, bae_ckpt)
    ckpt = str(root / "model.ckpt")
    log = str(root / "train.csv")
    bundle, history = train(small_dataset, cfg, bae_ckpt, ckpt, log)
    return dict(cfg=cfg, bae_ckpt=bae_ckpt, ckpt=ckpt, log=log,
                bundle=bundle, history=history)


def test_pretrain_loss_decreases(small_dataset, tiny_config, tmp_path):
    cfg = clone_config(tiny_config, pretrain_steps=40, pretrain_batch=4)
    bundle, losses = pretrain_bae(small_dataset, cfg)
    assert len(losses) == 40
    head = float(np.mean(losses[:5]))
    tail = float(np.mean(losses[-5:]))
    assert tail < head, f"pretrain loss did not drop: {head:.4f} -> {tail:.4f}"
    # both groups come back frozen
    assert bundle.trainable_params() == {}


def test_pretrain_checkpoint_deterministic(small_dataset, tiny_config, tmp_path):
    p1, p2 = str(tmp_path / "a.ckpt"), str(tmp_path / "b.ckpt")
    pretrain_bae(small_dataset, tiny_config, p1)
    pretrain_bae(small_dataset, tiny_config, p2)
    b1 = open(p1, "rb").read()
    assert b1 == open(p2, "rb").read()
    assert len(b1) > 0
    # sidecar config round-trips to the exact same settings
    assert parse_config(sidecar_path(p1)) == tiny_config


def test_pretrain_empty_split(tiny_config, small_dataset):
    from tadm.phantom import Dataset
    empty = Dataset([r for r in small_dataset.records if r.split == "val"],
                    small_dataset.root)
    with pytest.raises(DataError):
        pretrain_bae(empty, tiny_config)


def test_train_requires_bae_checkpoint(small_dataset, tiny_config, tmp_path):
    with pytest.raises(ConfigError, match="BAE checkpoint"):
        train(small_dataset, tiny_config, str(tmp_path / "nope.ckpt"),
              str(tmp_path / "out.ckpt"))


def test_train_rejects_headless_checkpoint(small_dataset, tiny_config, tmp_path):
    bad = str(tmp_path / "bad.ckpt")
    save_checkpoint(bad, {"bae.head.w": Tensor(np.zeros((4, 1), np.float32))})
    with pytest.raises(CheckpointError, match="encoder"):
        train(small_dataset, tiny_config, bad, str(tmp_path / "out.ckpt"))


def test_train_log_matches_history(trained):
    lines = open(trained["log"], "r", encoding="utf-8").read().splitlines()
    assert lines[0] == "step,loss_dml,loss_bae"
    assert len(lines) == 1 + len(trained["history"])
    for row, (step, dml, bae) in zip(lines[1:], trained["history"]):
        s, d, b = row.split(",")
        assert int(s) == step
        assert float(d) == pytest.approx(dml, rel=1e-6)
        assert float(b) == pytest.approx(bae, rel=1e-6)


def test_train_history_losses_finite(trained):
    for step, dml, bae in trained["history"]:
        assert np.isfinite(dml) and dml > 0
        assert np.isfinite(bae) and bae >= 0


def test_train_keeps_frozen_groups_bit_identical(trained):
    before = load_checkpoint(trained["bae_ckpt"])
    after = load_checkpoint(trained["ckpt"])
    frozen = [k for k in before if k.startswith(("encoder.", "bae."))]
    assert frozen
    for k in frozen:
        assert np.array_equal(before[k], after[k]), f"{k} drifted during training"


def test_train_checkpoint_has_all_groups(trained):
    names = set(load_checkpoint(trained["ckpt"]))
    for group in ("encoder.", "bae.", "denoiser."):
        assert any(k.startswith(group) for k in names)


def test_load_bundle_round_trip(trained):
    cfg = trained["cfg"]
    bundle = load_bundle(trained["ckpt"], cfg)
    assert bundle.group_params("denoiser")
    # frozen groups stay out of the trainable set
    trainable = bundle.trainable_params()
    assert trainable and all(k.startswith("denoiser.") for k in trainable)
    # weights match the file exactly
    saved = load_checkpoint(trained["ckpt"])
    for k, p in bundle.named_params().items():
        assert np.array_equal(p.data, saved[k])


def test_load_bundle_without_denoiser(trained):
    bundle = load_bundle(trained["bae_ckpt"], trained["cfg"])
    assert bundle.group_params("denoiser") == {}


def test_trained_bundle_runs_inference(trained):
    cfg = trained["cfg"]
    img = np.zeros((24, 24), np.float32) + 0.25
    out = infer(trained["bundle"], cfg.schedule(), img, 60.0, 500.0, 1, Rng(7))
    assert out.shape == (24, 24)
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_ema_inactive_for_very_short_runs(small_dataset, tiny_config, tmp_path):
    """Below 5 steps the EMA horizon collapses; result equals no EMA at all."""
    bae_ckpt = str(tmp_path / "bae.ckpt")
    pretrain_bae(small_dataset, tiny_config, bae_ckpt)
    outs = []
    for tag, decay in (("on", 0.999), ("off", 0.0)):
        ck = str(tmp_path / f"m_{tag}.ckpt")
        cfg = clone_config(tiny_config, ema_decay=decay)
        train(small_dataset, cfg, bae_ckpt, ck)
        outs.append(open(ck, "rb").read())
    assert outs[0] == outs[1]


def test_total_loss_identity(small_dataset, tiny_config, tmp_path):
    cfg = clone_config(tiny_config, t_steps=4, bae_t_limit=4)
    bundle, _ = pretrain_bae(small_dataset, cfg)
    # graft a denoiser onto the pretrained groups
    full = build_bundle(0, enc_channels=8, enc_blocks=1, enc_growth=4,
                        unet_base=8, emb_width=32, meta_dim=8)
    for k, p in bundle.named_params().items():
        full.named_params()[k].data[...] = p.data
    full.set_frozen("encoder", True)
    full.set_frozen("bae", True)
    pairs = pairs_from_dataset(small_dataset, "train")
    batch = batch_from_pairs(pairs, np.array([0, 1]))
    dml, bae, tot = train_step(full, cfg.schedule(), batch, cfg,
                               AdamState(lr=1e-3), Rng(1), Rng(2))
    assert bae > 0.0
    assert tot == dml + cfg.lambda_bae * bae


def test_bae_t_limit_gates_aux_loss(small_dataset, tiny_config):
    """With T=1 the default limit 3T//10 floors to 0 and disables the term."""
    pairs = pairs_from_dataset(small_dataset, "train")
    batch = batch_from_pairs(pairs, np.array([0, 1]))
    results = {}
    for limit in (0, 1):
        cfg = clone_config(tiny_config, t_steps=1, bae_t_limit=limit)
        bundle, _ = pretrain_bae(small_dataset, cfg)
        full = build_bundle(0, enc_channels=8, enc_blocks=1, enc_growth=4,
                            unet_base=8, emb_width=32, meta_dim=8)
        for k, p in bundle.named_params().items():
            full.named_params()[k].data[...] = p.data
        full.set_frozen("encoder", True)
        full.set_frozen("bae", True)
        _, bae, _ = train_step(full, cfg.schedule(), batch, cfg,
                               AdamState(lr=1e-3), Rng(1), Rng(2))
        results[limit] = bae
    assert results[0] == 0.0
    assert results[1] > 0.0


def test_estimate_age_gap_is_bae_difference(small_dataset, tiny_config):
    bundle, _ = pretrain_bae(small_dataset, tiny_config)
    rng = Rng(11)
    imgs = Tensor(rng.normal((3, 24, 24, 1)) * 0.1 + 0.4)
    z_a = bundle.encoder(imgs)
    z_b = bundle.encoder(Tensor(imgs.data + 0.01))
    gap = estimate_age_gap(z_a, z_b, bundle.bae)
    expect = bundle.bae(z_b).data - bundle.bae(z_a).data
    assert gap.data == pytest.approx(expect, abs=1e-5)


def test_bae_mae_value_and_empty_split(small_dataset, tiny_config):
    from tadm.phantom import Dataset
    bundle, _ = pretrain_bae(small_dataset, tiny_config)
    err = bae_mae(bundle, small_dataset, "val")
    assert np.isfinite(err) and err > 0
    empty = Dataset([], small_dataset.root)
    with pytest.raises(DataError, match="val"):
        bae_mae(bundle, empty, "val")


def test_write_log_overwrites_atomically(tmp_path):
    path = str(tmp_path / "log.csv")
    write_log(path, [(1, 0.5, 0.25)])
    write_log(path, [(1, 0.125, 0.0), (2, 0.0625, 0.0)])
    lines = open(path).read().splitlines()
    assert lines == ["step,loss_dml,loss_bae", "1,0.125,0", "2,0.0625,0"]
    import os
    assert not os.path.exists(path + ".tmp")
