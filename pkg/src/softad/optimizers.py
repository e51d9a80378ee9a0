"""Iterative update engines.

Plain SGD (optionally with classical momentum) and Adam drive the
experiment harness.  The remaining engines exist to check the package's
convergence claims: a normalized clipped-momentum method whose step
length is exactly alpha (or zero), a projected sign-gradient method for
single-point batches, and a zeroth-order gradient estimator built from
unit-sphere probes.

Each state object is single-owner: step functions mutate its buffers in
place and return the new parameter vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .losses import hard_sign, rho
from .models import per_example_loss_and_grad
from .numerics import clip_to_norm, l2_norm, project_to_ball, sample_unit_sphere


def _check_shapes(w, g):
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    g = np.asarray(g, dtype=np.float64).reshape(-1)
    if w.shape != g.shape:
        raise ValueError("direction shape does not match parameters")
    return w, g


@dataclass
class SgdState:
    alpha: float
    momentum: float = 0.0
    buffer: np.ndarray = None

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")


def sgd_step(state: SgdState, w, direction) -> np.ndarray:
    w, g = _check_shapes(w, direction)
    if state.buffer is None:
        state.buffer = np.zeros_like(w)
    if state.buffer.shape != w.shape:
        raise ValueError("buffer shape does not match parameters")
    state.buffer = state.momentum * state.buffer + g
    return w - state.alpha * state.buffer


@dataclass
class AdamState:
    alpha: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: np.ndarray = None
    v: np.ndarray = None

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")


def adam_step(state: AdamState, w, direction) -> np.ndarray:
    w, g = _check_shapes(w, direction)
    if state.m is None:
        state.m = np.zeros_like(w)
        state.v = np.zeros_like(w)
    if state.m.shape != w.shape:
        raise ValueError("buffer shape does not match parameters")
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * g
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    m_hat = state.m / (1.0 - state.beta1**state.t)
    v_hat = state.v / (1.0 - state.beta2**state.t)
    return w - state.alpha * m_hat / (np.sqrt(v_hat) + state.eps)


@dataclass
class NormalizedMomentumState:
    alpha: float
    b: float
    gamma: float
    m: np.ndarray = None

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not 0 <= self.b < 1:
            raise ValueError("b must be in [0, 1)")
        if not self.gamma > 0:
            raise ValueError("invalid radius")


def normalized_momentum_step(state: NormalizedMomentumState, w, raw_gradient) -> np.ndarray:
    """Clip the gradient to norm gamma, fold it into the momentum buffer,
    then move exactly alpha along the normalized buffer (or stay put when
    the buffer is exactly zero)."""
    w, g = _check_shapes(w, raw_gradient)
    if state.m is None:
        state.m = np.zeros_like(w)
    if state.m.shape != w.shape:
        raise ValueError("buffer shape does not match parameters")
    clipped = clip_to_norm(g, state.gamma)
    state.m = state.b * state.m + (1.0 - state.b) * clipped
    norm = l2_norm(state.m)
    if norm == 0.0:
        return w.copy()
    return w - state.alpha * (state.m / norm)


def momentum_schedule(horizon: int, variance_proxy: float = 1.0):
    """(alpha, b, gamma) for a horizon of T steps: alpha = 1/T^(3/4),
    b = 1 - 1/sqrt(T), gamma = sqrt(variance_proxy/(1-b))."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if not variance_proxy > 0:
        raise ValueError("variance proxy must be positive")
    t = float(horizon)
    b = 1.0 - 1.0 / np.sqrt(t)
    return 1.0 / t**0.75, b, float(np.sqrt(variance_proxy / (1.0 - b)))


def warmup_variance_proxy(model, batch, loss: str) -> float:
    """Max per-point squared gradient norm over one pass; the stand-in for
    the unobservable smoothness gap in the schedule helper."""
    _, grads = per_example_loss_and_grad(model, batch, loss)
    return float(np.max(np.einsum("nd,nd->n", grads, grads)))


@dataclass
class ProjectedSignState:
    alpha: float
    theta: float
    radius: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.radius > 0:
            raise ValueError("invalid radius")


def projected_sign_sgd_step(state: ProjectedSignState, w, batch_point, model_eval) -> np.ndarray:
    """One step on a single data point: G = sign(loss - theta) * grad, then
    project w - alpha*G back onto the centered ball."""
    loss_value, grad = model_eval(w, batch_point)
    w, g = _check_shapes(w, grad)
    step = hard_sign(loss_value - state.theta) * g
    return project_to_ball(w - state.alpha * step, state.radius)


@dataclass
class ZerothOrderParams:
    r: float
    theta: float
    d: int

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError("smoothing radius must be positive")
        if self.d < 1:
            raise ValueError("dimension must be >= 1")


def zeroth_order_gradient(zo: ZerothOrderParams, loss_eval, w, rng) -> np.ndarray:
    """(d/r) * (theta + rho(loss(w + r*U) - theta)) * U with U uniform on
    the unit sphere; one loss evaluation, no gradient evaluations."""
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    if w.size != zo.d:
        raise ValueError("dimension does not match parameters")
    u = sample_unit_sphere(zo.d, rng)
    h = zo.theta + rho(float(loss_eval(w + zo.r * u)) - zo.theta)
    return (zo.d / zo.r) * h * u
