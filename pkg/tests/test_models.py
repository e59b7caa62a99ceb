"""Encoder, BAE head, U-Net, and parameter bundle behavior."""

import numpy as np
import pytest

from tadm.errors import ContractError, ShapeError
from tadm.models import (
    ConditioningBundle,
    ModelBundle,
    build_bundle,
)
from tadm.models.bae import AGE_MID_MONTHS, BaeHead
from tadm.models.encoder import Encoder
from tadm.models.unet import UNet
from tadm.numerics import Rng, Tensor


def small_bundle(seed=0, with_denoiser=True):
    return build_bundle(seed, enc_channels=8, enc_blocks=1, enc_growth=4,
                        unet_base=8, emb_width=32, meta_dim=8,
                        with_denoiser=with_denoiser)


def cond_for(bundle, images):
    z = bundle.encoder(Tensor(images))
    n = images.shape[0]
    return ConditioningBundle(z_a=z, delta=np.full(n, 24.0),
                              age=np.full(n, 600.0), status=np.zeros(n, np.int64))


def test_encoder_preserves_resolution():
    enc = Encoder(Rng(0), channels=8, blocks=1, growth=4)
    out = enc(Tensor(np.zeros((2, 12, 10, 1), np.float32)))
    assert out.shape == (2, 12, 10, 8)


def test_encoder_accepts_single_image():
    enc = Encoder(Rng(0), channels=4, blocks=1, growth=4)
    out = enc(Tensor(np.zeros((6, 6, 1), np.float32)))
    assert out.shape == (1, 6, 6, 4)


def test_encoder_rejects_multichannel():
    enc = Encoder(Rng(0), channels=4, blocks=1, growth=4)
    with pytest.raises(ShapeError):
        enc(Tensor(np.zeros((1, 6, 6, 3), np.float32)))


def test_encoder_deterministic_construction():
    a = Encoder(Rng(7), channels=8, blocks=2, growth=4)
    b = Encoder(Rng(7), channels=8, blocks=2, growth=4)
    x = Tensor(Rng(1).normal((1, 8, 8, 1)))
    assert np.array_equal(a(x).data, b(x).data)
    c = Encoder(Rng(8), channels=8, blocks=2, growth=4)
    assert not np.array_equal(a(x).data, c(x).data)


def test_bae_output_shape_and_anchor():
    bae = BaeHead(Rng(0), cin=8)
    z = Tensor(Rng(1).normal((3, 6, 6, 8)))
    out = bae(z)
    assert out.shape == (3,)
    # zeroing the head collapses the prediction to the age-range midpoint;
    # that pins the affine output mapping
    bae.fc2.w.data[...] = 0.0
    bae.fc2.b.data[...] = 0.0
    np.testing.assert_array_equal(bae(z).data, np.full(3, AGE_MID_MONTHS, np.float32))


def test_unet_zero_at_init():
    # the zero-initialized tail makes the denoiser start as the zero
    # function regardless of inputs or conditioning
    b = small_bundle()
    x = Tensor(Rng(2).normal((2, 8, 8, 1)))
    cond = cond_for(b, Rng(3).normal((2, 8, 8, 1)))
    out = b.denoiser(x, np.array([3, 5]), cond)
    assert out.shape == (2, 8, 8, 1)
    assert np.array_equal(out.data, np.zeros((2, 8, 8, 1), np.float32))


def _randomize_tail(unet: UNet, seed=11):
    unet.tail.w.data[...] = Rng(seed).normal(unet.tail.w.shape) * 0.1


def test_unet_conditioning_sensitivity():
    b = small_bundle()
    _randomize_tail(b.denoiser)
    x = Tensor(Rng(4).normal((1, 8, 8, 1)))
    z = b.encoder(Tensor(Rng(5).normal((1, 8, 8, 1))))

    def run(delta, t):
        cond = ConditioningBundle(z_a=z, delta=np.array([delta]),
                                  age=np.array([600.0]), status=np.array([0]))
        return b.denoiser(x, np.array([t]), cond).data

    base = run(24.0, 3)
    assert not np.array_equal(base, run(48.0, 3))   # delta reaches the output
    assert not np.array_equal(base, run(24.0, 7))   # t reaches the output


def test_unet_shape_errors():
    b = small_bundle()
    x = Tensor(np.zeros((1, 8, 8, 1), np.float32))
    cond = cond_for(b, np.zeros((1, 8, 8, 1), np.float32))
    with pytest.raises(ShapeError):
        b.denoiser(Tensor(np.zeros((1, 8, 8, 2), np.float32)), np.array([1]), cond)
    bad = ConditioningBundle(z_a=b.encoder(Tensor(np.zeros((1, 4, 4, 1), np.float32))),
                             delta=np.array([1.0]), age=np.array([600.0]),
                             status=np.array([0]))
    with pytest.raises(ShapeError):
        b.denoiser(x, np.array([1]), bad)


def test_unet_batch_consistency():
    # rows of a batch are independent: running two inputs together equals
    # running them alone (GroupNorm normalizes per sample, not per batch)
    b = small_bundle()
    _randomize_tail(b.denoiser)
    imgs = Rng(6).normal((2, 8, 8, 1))
    x = Rng(7).normal((2, 8, 8, 1))
    cond = cond_for(b, imgs)
    both = b.denoiser(Tensor(x), np.array([2, 2]), cond).data
    one = b.denoiser(Tensor(x[:1]), np.array([2]), cond_for(b, imgs[:1])).data
    np.testing.assert_allclose(both[0], one[0], atol=2e-6)


def test_bundle_groups_disjoint_and_complete():
    b = small_bundle()
    enc = set(b.group_params("encoder"))
    bae = set(b.group_params("bae"))
    den = set(b.group_params("denoiser"))
    assert not enc & bae and not enc & den and not bae & den
    assert set(b.named_params()) == enc | bae | den
    assert all(k.startswith("encoder.") for k in enc)
    assert all(k.startswith("bae.") for k in bae)
    assert all(k.startswith("denoiser.") for k in den)


def test_bundle_freeze_controls_trainability():
    b = small_bundle()
    total = len(b.named_params())
    assert len(b.trainable_params()) == total
    b.set_frozen("encoder", True)
    b.set_frozen("bae", True)
    train = b.trainable_params()
    assert set(train) == set(b.group_params("denoiser"))
    for p in b.group_params("encoder").values():
        assert not p.requires_grad
    b.set_frozen("encoder", False)
    b.set_frozen("bae", False)
    assert len(b.trainable_params()) == total


def test_bundle_freeze_clears_grads():
    b = small_bundle()
    p = next(iter(b.group_params("bae").values()))
    p.grad = np.ones_like(p.data)
    b.set_frozen("bae", True)
    assert p.grad is None


def test_bundle_unknown_group():
    with pytest.raises(ContractError):
        small_bundle().group_params("discriminator")


def test_build_bundle_deterministic():
    a = small_bundle(seed=3).named_params()
    b = small_bundle(seed=3).named_params()
    assert set(a) == set(b)
    for k in a:
        assert np.array_equal(a[k].data, b[k].data)
    c = small_bundle(seed=4).named_params()
    assert any(not np.array_equal(a[k].data, c[k].data) for k in a)


def test_build_bundle_without_denoiser():
    b = small_bundle(with_denoiser=False)
    assert b.denoiser is None
    assert b.group_params("denoiser") == {}
    assert all(not k.startswith("denoiser.") for k in b.named_params())
