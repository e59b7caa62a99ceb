"""Forward-value oracles for the tensor ops.

Convolutions are checked against scipy.signal.correlate2d (the ops are
cross-correlations, no kernel flip), activations against scipy.special,
normalization against direct moment computations.
"""

import numpy as np
import pytest
from scipy.signal import correlate2d
from scipy.special import expit

from tadm.errors import ConfigError, ShapeError
from tadm.numerics import (
    Rng,
    Tensor,
    add,
    add_bias,
    add_channel_vec,
    avg_pool2,
    concat,
    conv2d,
    conv2d_nhwc,
    group_norm,
    matmul,
    mean,
    mul,
    reshape,
    relu,
    silu,
    spatial_mean,
    sub,
    sum_all,
    tensor_op,
    upsample2,
)


def _rand(shape, seed=0):
    return Rng(seed).normal(shape)


# --- elementwise and matrix ops ---


def test_add_sub_mul_values():
    a = Tensor([1.0, 2.0, 3.0])
    b = Tensor([10.0, 20.0, 30.0])
    assert np.array_equal(add(a, b).data, [11.0, 22.0, 33.0])
    assert np.array_equal(sub(a, b).data, [-9.0, -18.0, -27.0])
    assert np.array_equal(mul(a, b).data, [10.0, 40.0, 90.0])
    assert np.array_equal(mul(a, 2.0).data, [2.0, 4.0, 6.0])
    assert np.array_equal(add(a, 1.0).data, [2.0, 3.0, 4.0])


@pytest.mark.parametrize("op,name", [(add, "add"), (sub, "sub"), (mul, "mul")])
def test_elementwise_shape_errors(op, name):
    with pytest.raises(ShapeError) as exc:
        op(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 2))))
    msg = str(exc.value)
    assert name in msg and "(2, 3)" in msg and "(3, 2)" in msg


def test_matmul_oracle():
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    b = Tensor([[5.0, 6.0], [7.0, 8.0]])
    assert np.array_equal((a @ b).data, [[19.0, 22.0], [43.0, 50.0]])


def test_matmul_shape_error():
    with pytest.raises(ShapeError):
        matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))
    with pytest.raises(ShapeError):
        matmul(Tensor(np.zeros(3)), Tensor(np.zeros((3, 2))))


def test_relu_and_silu_values():
    x = np.array([-2.0, -0.5, 0.0, 0.5, 2.0], np.float32)
    assert np.array_equal(relu(Tensor(x)).data, np.maximum(x, 0.0))
    got = silu(Tensor(x)).data
    want = x * expit(x)
    np.testing.assert_allclose(got, want, rtol=1e-6)
    assert silu(Tensor([0.0])).data[0] == 0.0


def test_silu_finite_on_extremes():
    x = Tensor(np.array([-1e4, -88.0, 88.0, 1e4], np.float32))
    assert np.all(np.isfinite(silu(x).data))


def test_mean_sum_values():
    x = Tensor(np.arange(6, dtype=np.float32).reshape(2, 3))
    assert mean(x).item() == 2.5
    assert sum_all(x).item() == 15.0


def test_reshape_and_error():
    x = Tensor(np.arange(6, dtype=np.float32))
    assert reshape(x, (2, 3)).shape == (2, 3)
    with pytest.raises(ShapeError):
        reshape(x, (4, 2))


def test_concat_values():
    a = Tensor(np.ones((2, 2)))
    b = Tensor(np.zeros((2, 3)))
    out = concat([a, b], axis=1)
    assert out.shape == (2, 5)
    assert np.array_equal(out.data[:, :2], np.ones((2, 2)))
    assert np.array_equal(out.data[:, 2:], np.zeros((2, 3)))


# --- structured adds and pooling ---


def test_add_bias_and_errors():
    x = Tensor(np.zeros((2, 3)))
    b = Tensor([1.0, 2.0, 3.0])
    assert np.array_equal(add_bias(x, b).data, np.tile([1.0, 2.0, 3.0], (2, 1)))
    with pytest.raises(ShapeError):
        add_bias(x, Tensor([1.0, 2.0]))
    with pytest.raises(ShapeError):
        add_bias(Tensor(np.zeros((2, 3, 4))), Tensor(np.zeros(4)))


def test_add_channel_vec():
    x = Tensor(np.zeros((2, 2, 2, 3)))
    v = Tensor([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    out = add_channel_vec(x, v).data
    assert np.array_equal(out[0, 1, 1], [1.0, 2.0, 3.0])
    assert np.array_equal(out[1, 0, 0], [4.0, 5.0, 6.0])
    with pytest.raises(ShapeError):
        add_channel_vec(x, Tensor(np.zeros((2, 4))))


def test_spatial_mean():
    x = np.zeros((1, 2, 2, 2), np.float32)
    x[0, :, :, 0] = [[1, 2], [3, 4]]
    x[0, :, :, 1] = 7.0
    out = spatial_mean(Tensor(x)).data
    np.testing.assert_allclose(out, [[2.5, 7.0]])


def test_avg_pool2_value_and_inverse():
    x = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]], np.float32).reshape(1, 2, 2, 1))
    assert avg_pool2(x).data.reshape(()) == 2.5
    y = Tensor(_rand((2, 3, 5, 4), seed=1))
    # pooling undoes nearest-neighbour upsampling exactly
    assert np.array_equal(avg_pool2(upsample2(y)).data, y.data)
    with pytest.raises(ShapeError):
        avg_pool2(Tensor(np.zeros((1, 3, 4, 1))))


def test_upsample2_values():
    x = Tensor(np.array([[1.0, 2.0]], np.float32).reshape(1, 1, 2, 1))
    out = upsample2(x).data[0, :, :, 0]
    assert np.array_equal(out, [[1, 1, 2, 2], [1, 1, 2, 2]])


# --- group normalization ---


def test_group_norm_standardizes_groups():
    x = _rand((2, 4, 4, 8), seed=2) * 3.0 + 1.0
    gamma = Tensor(np.ones(8))
    beta = Tensor(np.zeros(8))
    y = group_norm(Tensor(x), 2, gamma, beta).data.astype(np.float64)
    for n in range(2):
        for g in range(2):
            grp = y[n, :, :, g * 4:(g + 1) * 4]
            assert abs(grp.mean()) < 1e-5
            assert abs(grp.var() - 1.0) < 1e-3     # eps shrinks var slightly


def test_group_norm_affine():
    x = Tensor(_rand((1, 2, 2, 4), seed=3))
    ones, zeros = Tensor(np.ones(4)), Tensor(np.zeros(4))
    base = group_norm(x, 1, ones, zeros).data
    scaled = group_norm(x, 1, Tensor(np.full(4, 2.0)), Tensor(np.full(4, 0.5))).data
    np.testing.assert_allclose(scaled, base * 2.0 + 0.5, atol=1e-6)


def test_group_norm_shape_errors():
    x = Tensor(np.zeros((1, 2, 2, 6)))
    good = Tensor(np.ones(6))
    with pytest.raises(ShapeError):
        group_norm(x, 4, good, good)            # 6 channels, 4 groups
    with pytest.raises(ShapeError):
        group_norm(x, 2, Tensor(np.ones(5)), good)


# --- convolutions ---


def test_conv2d_ones_oracle():
    # 3x3 ones image, 3x3 ones kernel, same padding: the output counts the
    # in-bounds window cells: corners 4, edges 6, center 9
    img = Tensor(np.ones((3, 3), np.float32))
    ker = Tensor(np.ones((3, 3), np.float32))
    out = conv2d(img, ker).data
    want = np.array([[4, 6, 4], [6, 9, 6], [4, 6, 4]], np.float32)
    assert np.array_equal(out, want)


def test_conv2d_identity_kernel():
    img = Tensor(_rand((7, 7), seed=4))
    ker = np.zeros((3, 3), np.float32)
    ker[1, 1] = 1.0
    assert np.array_equal(conv2d(img, Tensor(ker)).data, img.data)


def test_conv2d_is_cross_correlation():
    # impulse at (1,1), kernel weight at its top-left corner: a
    # cross-correlation moves the impulse to (2,2); a flipped convolution
    # would move it to (0,0)
    img = np.zeros((4, 4), np.float32)
    img[1, 1] = 1.0
    ker = np.zeros((3, 3), np.float32)
    ker[0, 0] = 1.0
    out = conv2d(Tensor(img), Tensor(ker)).data
    assert out[2, 2] == 1.0
    assert out.sum() == 1.0


def test_conv2d_matches_scipy():
    img = _rand((9, 8), seed=5)
    ker = _rand((3, 3), seed=6)
    got = conv2d(Tensor(img), Tensor(ker)).data
    want = correlate2d(img, ker, mode="same")
    np.testing.assert_allclose(got, want, atol=1e-5)


def test_conv2d_multichannel_matches_scipy():
    x = _rand((2, 3, 6, 5), seed=7)
    w = _rand((4, 3, 3, 3), seed=8)
    b = _rand((4,), seed=9)
    got = conv2d(Tensor(x), Tensor(w), Tensor(b)).data
    want = np.empty((2, 4, 6, 5), np.float32)
    for n in range(2):
        for o in range(4):
            acc = np.zeros((6, 5))
            for c in range(3):
                acc += correlate2d(x[n, c], w[o, c], mode="same")
            want[n, o] = acc + b[o]
    np.testing.assert_allclose(got, want, atol=1e-4)


def test_conv2d_even_kernel_padding():
    # 2x2 kernel anchors its window at the output pixel (pad 0 before,
    # 1 after on each axis)
    img = Tensor(np.ones((2, 2), np.float32))
    ker = Tensor(np.ones((2, 2), np.float32))
    out = conv2d(img, ker).data
    assert np.array_equal(out, [[4.0, 2.0], [2.0, 1.0]])


def test_conv2d_nhwc_matches_conv2d():
    x = _rand((2, 6, 6, 3), seed=10)
    w = _rand((5, 3, 3, 3), seed=11)
    xc = np.ascontiguousarray(x.transpose(0, 3, 1, 2))
    wmat = np.ascontiguousarray(w.transpose(2, 3, 1, 0).reshape(27, 5))
    a = conv2d_nhwc(Tensor(x), Tensor(wmat), None, 3, 3).data
    b = conv2d(Tensor(xc), Tensor(w)).data.transpose(0, 2, 3, 1)
    np.testing.assert_allclose(a, b, atol=1e-5)


def test_conv2d_nhwc_one_by_one():
    x = _rand((2, 4, 4, 3), seed=12)
    wmat = _rand((3, 6), seed=13)
    out = conv2d_nhwc(Tensor(x), Tensor(wmat), None, 1, 1).data
    np.testing.assert_allclose(out, x @ wmat, atol=1e-6)


def test_conv2d_shape_errors():
    with pytest.raises(ShapeError):
        conv2d(Tensor(np.zeros((1, 2, 4, 4))), Tensor(np.zeros((3, 3, 3, 3))))
    with pytest.raises(ShapeError):
        conv2d(Tensor(np.zeros((4, 4))), Tensor(np.zeros((3, 3, 3))))
    with pytest.raises(ShapeError):
        conv2d_nhwc(Tensor(np.zeros((1, 4, 4, 2))), Tensor(np.zeros((9, 4))), None, 3, 3)


# --- dispatch ---


def test_tensor_op_dispatch():
    a = Tensor([1.0, 2.0])
    out = tensor_op("scale", a, 3.0)
    assert np.array_equal(out.data, [3.0, 6.0])
    with pytest.raises(ConfigError):
        tensor_op("transmogrify", a)


def test_tensor_float32_storage():
    t = Tensor(np.arange(4, dtype=np.float64))
    assert t.data.dtype == np.float32
    assert Tensor(3).data.dtype == np.float32
