import math

import numpy as np
import pytest

import softad.optimizers as optimizers
from softad.losses import rho
from softad.models import LabeledBatch, per_example_loss_and_grad
from softad.numerics import l2_norm, substream
from softad.optimizers import (
    AdamState,
    NormalizedMomentumState,
    ProjectedSignState,
    SgdState,
    ZerothOrderParams,
    adam_step,
    normalized_momentum_step,
    projected_sign_sgd_step,
    momentum_schedule,
    sgd_step,
    warmup_variance_proxy,
    zeroth_order_gradient,
)
from test_models import random_model


def test_sgd_single_step():
    w = sgd_step(SgdState(alpha=0.1), np.array([2.0]), np.array([2.0]))
    assert w[0] == 1.8


def test_sgd_zero_direction_decays_buffer():
    state = SgdState(alpha=0.1, momentum=0.5)
    w = np.array([1.0, -1.0])
    w = sgd_step(state, w, np.array([2.0, 0.0]))
    for _ in range(3):
        w = sgd_step(state, w, np.zeros(2))
    np.testing.assert_allclose(state.buffer, [2.0 * 0.5**3, 0.0], rtol=1e-15)
    frozen = SgdState(alpha=0.1, momentum=0.5)
    w0 = np.array([3.0, 4.0])
    assert np.array_equal(sgd_step(frozen, w0, np.zeros(2)), w0)


def test_sgd_momentum_matches_closed_form():
    b = 0.8
    alpha = 0.05
    g = np.array([1.5, -2.0])
    state = SgdState(alpha=alpha, momentum=b)
    w = np.zeros(2)
    for _ in range(3):
        w = sgd_step(state, w, g)
    # buffers: g, g(1+b), g(1+b+b^2); sum = 3 + 2b + b^2
    np.testing.assert_allclose(w, -alpha * g * (3 + 2 * b + b * b), rtol=1e-14)


def test_sgd_shape_mismatch():
    with pytest.raises(ValueError):
        sgd_step(SgdState(alpha=0.1), np.zeros(3), np.zeros(2))
    state = SgdState(alpha=0.1)
    sgd_step(state, np.zeros(3), np.zeros(3))
    with pytest.raises(ValueError):
        sgd_step(state, np.zeros(2), np.zeros(2))


def test_sgd_state_validation():
    with pytest.raises(ValueError):
        SgdState(alpha=0.0)
    with pytest.raises(ValueError):
        SgdState(alpha=0.1, momentum=1.0)


def test_adam_first_step_magnitude():
    for g in ([3.0, -0.25], [1e-3, 40.0]):
        state = AdamState()
        w = adam_step(state, np.zeros(2), np.array(g))
        np.testing.assert_allclose(np.abs(w), state.alpha, rtol=1e-4)
        assert np.array_equal(np.sign(w), -np.sign(g))


def test_adam_zero_direction_never_moves():
    state = AdamState()
    w = np.array([0.3, -0.7])
    for _ in range(5):
        w2 = adam_step(state, w, np.zeros(2))
        assert np.array_equal(w2, w)
        w = w2


def test_adam_matches_independent_recurrence():
    # scalar re-implementation of the published recurrences
    alpha, b1, b2, eps = 0.001, 0.9, 0.999, 1e-8
    w_ref, m, v = 1.0, 0.0, 0.0
    state = AdamState(alpha=alpha, beta1=b1, beta2=b2, eps=eps)
    w = np.array([1.0])
    for t in range(1, 11):
        g = w_ref  # gradient of w^2/2
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        w_ref = w_ref - alpha * m_hat / (math.sqrt(v_hat) + eps)
        w = adam_step(state, w, w.copy())
        assert abs(w[0] - w_ref) <= 1e-15


def test_normalized_momentum_step_length_exact():
    state = NormalizedMomentumState(alpha=0.01, b=0.9, gamma=2.0)
    rng = substream(40, 0)
    w = rng.normal(size=6)
    for _ in range(50):
        w2 = normalized_momentum_step(state, w, rng.normal(size=6) * 5.0)
        assert abs(l2_norm(w2 - w) - state.alpha) <= 1e-12 * state.alpha
        assert l2_norm(state.m) <= state.gamma * (1 + 1e-12)
        w = w2


def test_normalized_momentum_zero_buffer_freezes():
    state = NormalizedMomentumState(alpha=0.1, b=0.0, gamma=1.0)
    w = np.array([1.0, 2.0])
    w2 = normalized_momentum_step(state, w, np.zeros(2))
    assert np.array_equal(w2, w)


def test_normalized_momentum_straight_line():
    state = NormalizedMomentumState(alpha=0.05, b=0.0, gamma=10.0)
    g = np.array([3.0, 4.0])
    w = np.array([1.0, 1.0])
    unit = g / 5.0
    for k in range(1, 6):
        w = normalized_momentum_step(state, w, g)
        np.testing.assert_allclose(w, [1.0, 1.0] - k * 0.05 * unit, atol=1e-12)


def test_momentum_schedule_values():
    alpha, b, gamma = momentum_schedule(10**4)
    assert alpha == 1e-3
    assert b == 0.99
    assert gamma == math.sqrt(1.0 / (1.0 - b))
    alpha2, b2, gamma2 = momentum_schedule(10**4, variance_proxy=4.0)
    assert gamma2 == 2.0 * gamma
    with pytest.raises(ValueError):
        momentum_schedule(0)
    with pytest.raises(ValueError):
        momentum_schedule(100, variance_proxy=0.0)


def test_warmup_variance_proxy_is_max_pointwise_norm():
    rng = substream(41, 0)
    m = random_model(rng, dims=(2, 5, 3))
    batch = LabeledBatch(rng.normal(size=(12, 2)), rng.integers(0, 3, size=12))
    _, grads = per_example_loss_and_grad(m, batch, "cross-entropy")
    want = max(float(np.dot(g, g)) for g in grads)
    assert math.isclose(warmup_variance_proxy(m, batch, "cross-entropy"), want, rel_tol=1e-12)


def quadratic_point_eval(w, z):
    w = np.asarray(w, dtype=np.float64)
    diff = w - z
    return float(np.dot(diff, diff)), 2.0 * diff


def test_projected_sign_frozen_at_threshold():
    z = np.array([1.0, 0.0])
    w = np.array([2.0, 0.0])
    loss = quadratic_point_eval(w, z)[0]
    state = ProjectedSignState(alpha=0.1, theta=loss, radius=10.0)
    w2 = projected_sign_sgd_step(state, w, z, quadratic_point_eval)
    assert np.array_equal(w2, w)


def test_projected_sign_descends_inside_ball():
    z = np.zeros(2)
    w = np.array([0.5, 0.5])
    state = ProjectedSignState(alpha=0.1, theta=0.0, radius=10.0)
    w2 = projected_sign_sgd_step(state, w, z, quadratic_point_eval)
    np.testing.assert_allclose(w2, w - 0.1 * 2.0 * w, rtol=1e-15)


def test_projected_sign_lands_on_ball_boundary():
    z = np.array([5.0, 0.0])
    w = np.array([0.9, 0.0])
    # loss below theta forces ascent away from z, through the boundary
    state = ProjectedSignState(alpha=1.0, theta=100.0, radius=1.0)
    w2 = projected_sign_sgd_step(state, w, z, quadratic_point_eval)
    assert abs(l2_norm(w2) - 1.0) <= 1e-12


def test_projected_sign_iterates_stay_in_ball():
    rng = substream(42, 0)
    state = ProjectedSignState(alpha=0.5, theta=0.5, radius=2.0)
    w = np.array([1.5, -0.5])
    for _ in range(100):
        z = rng.normal(size=2) * 3.0
        w = projected_sign_sgd_step(state, w, z, quadratic_point_eval)
        assert l2_norm(w) <= 2.0 * (1 + 1e-12)


def test_zeroth_order_symmetric_point():
    zo = ZerothOrderParams(r=1.0, theta=0.0, d=1)
    seen = set()
    for seed in range(30):
        g = zeroth_order_gradient(zo, lambda w: float(w[0] ** 2), np.zeros(1), substream(seed, 1))
        assert abs(abs(g[0]) - (math.sqrt(2.0) - 1.0)) <= 1e-12
        seen.add(np.sign(g[0]))
    assert seen == {-1.0, 1.0}


def test_zeroth_order_norm_is_scaled_h(monkeypatch):
    fixed_u = np.array([0.6, 0.8])
    monkeypatch.setattr(optimizers, "sample_unit_sphere", lambda d, rng: fixed_u.copy())
    zo = ZerothOrderParams(r=0.25, theta=0.1, d=2)
    w = np.array([0.3, -0.2])

    def loss_eval(v):
        return float(np.dot(v, v))

    g = zeroth_order_gradient(zo, loss_eval, w, substream(0, 0))
    h = 0.1 + rho(loss_eval(w + 0.25 * fixed_u) - 0.1)
    np.testing.assert_allclose(g, (2.0 / 0.25) * h * fixed_u, rtol=1e-15)
    assert abs(l2_norm(g) - (2.0 / 0.25) * abs(h)) <= 1e-12


def test_zeroth_order_one_loss_eval_no_gradients():
    calls = []

    def loss_eval(v):
        calls.append(1)
        return 1.0

    zo = ZerothOrderParams(r=0.5, theta=0.0, d=3)
    zeroth_order_gradient(zo, loss_eval, np.zeros(3), substream(1, 0))
    assert len(calls) == 1


def test_zeroth_order_unbiased_in_1d():
    # exact two-point value of the smoothed derivative at w
    zo = ZerothOrderParams(r=0.1, theta=0.0, d=1)
    w, r = 0.7, 0.1

    def h(v):
        return 0.0 + rho(v * v - 0.0)

    exact = (h(w + r) - h(w - r)) / (2 * r)
    rng = substream(43, 0)
    n = 10**4
    draws = np.array(
        [zeroth_order_gradient(zo, lambda v: float(v[0] ** 2), np.array([w]), rng)[0] for _ in range(n)]
    )
    se = draws.std(ddof=1) / math.sqrt(n)
    assert abs(draws.mean() - exact) <= 4.0 * se


def test_param_validation():
    with pytest.raises(ValueError):
        ZerothOrderParams(r=0.0, theta=0.0, d=1)
    with pytest.raises(ValueError):
        ZerothOrderParams(r=0.1, theta=0.0, d=0)
    with pytest.raises(ValueError):
        NormalizedMomentumState(alpha=0.1, b=1.0, gamma=1.0)
    with pytest.raises(ValueError, match="invalid radius"):
        NormalizedMomentumState(alpha=0.1, b=0.5, gamma=0.0)
    with pytest.raises(ValueError, match="invalid radius"):
        ProjectedSignState(alpha=0.1, theta=0.0, radius=-1.0)
    with pytest.raises(ValueError):
        zeroth_order_gradient(ZerothOrderParams(r=0.1, theta=0.0, d=2), lambda v: 0.0, np.zeros(3), substream(0, 0))
