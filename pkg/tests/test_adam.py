"""Adam update rule oracles."""

import numpy as np
import pytest

from tadm.errors import ContractError
from tadm.numerics import AdamState, Tensor, adam_step, mean, mul, sub


def test_first_step_magnitude_is_lr():
    # with bias correction the first update is lr * g/(|g| + eps'), so every
    # entry moves by almost exactly lr in the direction opposing the grad
    p = Tensor(np.zeros(4), requires_grad=True)
    p.grad = np.array([0.5, -2.0, 10.0, -1e-3], np.float32)
    st = AdamState(lr=1e-2)
    adam_step({"p": p}, st)
    np.testing.assert_allclose(np.abs(p.data), np.full(4, 1e-2), rtol=1e-5)
    assert np.all(np.sign(p.data) == [-1.0, 1.0, -1.0, 1.0])


def test_grads_cleared_and_step_counted():
    p = Tensor(np.ones(2), requires_grad=True)
    p.grad = np.ones(2, np.float32)
    st = AdamState()
    adam_step({"p": p}, st)
    assert p.grad is None
    assert st.step == 1
    assert st.m["p"].shape == (2,)
    assert st.v["p"].shape == (2,)


def test_frozen_param_untouched():
    frozen = Tensor(np.full(3, 7.0), requires_grad=False)
    frozen.grad = np.ones(3, np.float32)   # stale grad must be dropped, not used
    live = Tensor(np.zeros(3), requires_grad=True)
    live.grad = np.ones(3, np.float32)
    adam_step({"a": frozen, "b": live}, AdamState(lr=0.1))
    assert np.array_equal(frozen.data, np.full(3, 7.0, np.float32))
    assert frozen.grad is None
    assert not np.array_equal(live.data, np.zeros(3))


def test_missing_grad_raises():
    p = Tensor(np.zeros(2), requires_grad=True)
    with pytest.raises(ContractError) as exc:
        adam_step({"weird": p}, AdamState())
    assert "weird" in str(exc.value)


def test_converges_on_quadratic():
    # minimize mean((p - target)^2); Adam with a generous lr should close
    # most of the gap in a few hundred steps
    target = Tensor(np.array([3.0, -1.0, 0.5], np.float32))
    p = Tensor(np.zeros(3), requires_grad=True)
    st = AdamState(lr=0.05)
    for _ in range(400):
        d = sub(p, target)
        mean(mul(d, d)).backward()
        adam_step({"p": p}, st)
    np.testing.assert_allclose(p.data, target.data, atol=1e-2)


def test_two_steps_match_reference():
    # independent reimplementation of two textbook Adam steps in float64
    g1 = np.array([0.3, -0.7], np.float64)
    g2 = np.array([-0.2, 0.4], np.float64)
    lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8

    ref = np.zeros(2)
    m = np.zeros(2)
    v = np.zeros(2)
    for i, g in enumerate([g1, g2], start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        ref -= lr * (m / (1 - b1 ** i)) / (np.sqrt(v / (1 - b2 ** i)) + eps)

    p = Tensor(np.zeros(2), requires_grad=True)
    st = AdamState(lr=lr)
    for g in [g1, g2]:
        p.grad = g.astype(np.float32)
        adam_step({"p": p}, st)
    np.testing.assert_allclose(p.data, ref, atol=1e-6)
