import math

import numpy as np
import pytest

from groupaffect.nn import AdamSpec, AdamState, Optimizer, Param, SGDSpec, adam_step, sgd_step


def adam_scalar(theta, grads, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta -= lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
    return theta


def test_adam_zero_grad_keeps_params():
    p = np.array([1.0, -2.0])
    adam_step([p], [np.zeros(2)], AdamState.zeros_like([p]), AdamSpec())
    np.testing.assert_array_equal(p, [1.0, -2.0])


def test_adam_first_step_unit_grad():
    p = np.array([0.5])
    adam_step([p], [np.ones(1)], AdamState.zeros_like([p]), AdamSpec())
    assert p[0] == pytest.approx(0.5 - 1e-3 / (1 + 1e-8), abs=1e-15)


def test_adam_constant_gradient_monotone():
    p = np.array([1.0])
    state, spec = AdamState.zeros_like([p]), AdamSpec()
    prev = []
    for _ in range(100):
        adam_step([p], [np.array([0.3])], state, spec)
        prev.append(p[0])
    assert all(a > b for a, b in zip(prev, prev[1:]))


def test_adam_matches_scalar_recurrence():
    rng = np.random.default_rng(0)
    grads = rng.normal(size=10)
    p = np.array([0.2])
    state = AdamState.zeros_like([p])
    for g in grads:
        adam_step([p], [np.array([g])], state, AdamSpec())
    assert abs(p[0] - adam_scalar(0.2, grads)) <= 1e-12


def test_sgd_weight_decay_only():
    p, v = np.array([1.0]), np.zeros(1)
    sgd_step([p], [np.zeros(1)], [v], SGDSpec(lr=0.01, momentum=0.9, weight_decay=5e-4))
    assert p[0] == pytest.approx(1 - 0.01 * 5e-4, abs=1e-16)


def test_sgd_two_steps():
    p, v = np.array([2.0]), np.zeros(1)
    spec = SGDSpec(lr=0.1, momentum=0.5, weight_decay=0.0)
    sgd_step([p], [np.array([1.0])], [v], spec)
    assert (p[0], v[0]) == pytest.approx((1.9, -0.1))
    sgd_step([p], [np.array([1.0])], [v], spec)
    assert (p[0], v[0]) == pytest.approx((1.75, -0.15))


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        sgd_step([np.zeros(2)], [np.zeros(3)], [np.zeros(2)], SGDSpec())
    with pytest.raises(ValueError):
        adam_step([np.zeros(2)], [np.zeros(2), np.zeros(2)], AdamState.zeros_like([np.zeros(2)]), AdamSpec())


@pytest.mark.parametrize("kwargs", [{"lr": 0}, {"beta1": 1.0}])
def test_adam_spec_validation(kwargs):
    with pytest.raises(ValueError):
        AdamSpec(**kwargs)


def test_optimizer_binds_params():
    p = Param("w", np.array([1.0, 1.0]))
    opt = Optimizer(SGDSpec(lr=0.5, momentum=0.0, weight_decay=0.0), [p])
    p.grad[...] = [1.0, -1.0]
    opt.step()
    np.testing.assert_array_equal(p.data, [0.5, 1.5])
    opt.zero_grad()
    assert not p.grad.any()
