"""Objective values and update directions for the wrapped training rules.

Every op returns a :class:`DirectionResult` whose ``direction`` is the
vector the optimizer subtracts (after step-size scaling), so ascent shows
up as a negated direction.  Flood switches on the sign of the batch mean
loss minus theta and freezes exactly at the threshold; iFlood and the
soft variant apply their truncator per point instead.

The gradient-regularized family comes in two forms: ``gr_exact_direction``
evaluates the Hessian-vector product by central differences of the
analytic gradient at step h = 1e-4*(1+||w||), and ``fdgr_direction`` is
the two-gradient forward-difference scheme; the normalized-ascent variant
is ``sam_direction``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .losses import hard_sign, phi, rho
from .models import LabeledBatch, MlpModel, loss_and_weighted_grad
from .numerics import l2_norm

KINDS = ("erm", "flood", "iflood", "softad", "sam", "fdgr", "gr-exact")

GR_PARAM_CAP = 10**4


@dataclass(frozen=True)
class ObjectiveSpec:
    """Which rule to run and its hyperparameters; fields must be present
    exactly for the kinds that use them."""

    kind: str
    theta: float = None
    sigma: float = None
    radius: float = None
    lam: float = None
    fd_step: float = None

    def __post_init__(self):
        needed = {
            "erm": (),
            "flood": ("theta",),
            "iflood": ("theta",),
            "softad": ("theta", "sigma"),
            "sam": ("radius",),
            "fdgr": ("lam", "fd_step"),
            "gr-exact": ("lam",),
        }
        if self.kind not in needed:
            raise ValueError(f"unknown objective kind: {self.kind!r}")
        if self.kind == "softad" and self.sigma is None:
            object.__setattr__(self, "sigma", 1.0)
        for name in ("theta", "sigma", "radius", "lam", "fd_step"):
            have = getattr(self, name) is not None
            if have != (name in needed[self.kind]):
                raise ValueError(f"{self.kind} objective {'requires' if not have else 'does not take'} {name}")
        if self.theta is not None and not np.isfinite(self.theta):
            raise ValueError("theta must be finite")
        if self.sigma is not None and not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.radius is not None and not self.radius > 0:
            raise ValueError("radius must be positive")
        if self.lam is not None and self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if self.fd_step is not None and self.fd_step == 0:
            raise ValueError("fd_step must be nonzero")

    @classmethod
    def erm(cls):
        return cls("erm")

    @classmethod
    def flood(cls, theta):
        return cls("flood", theta=float(theta))

    @classmethod
    def iflood(cls, theta):
        return cls("iflood", theta=float(theta))

    @classmethod
    def softad(cls, theta, sigma=1.0):
        return cls("softad", theta=float(theta), sigma=float(sigma))

    @classmethod
    def sam(cls, radius):
        return cls("sam", radius=float(radius))

    @classmethod
    def fdgr(cls, lam, fd_step):
        return cls("fdgr", lam=float(lam), fd_step=float(fd_step))

    @classmethod
    def gr_exact(cls, lam):
        return cls("gr-exact", lam=float(lam))


@dataclass
class DirectionResult:
    direction: np.ndarray
    objective_value: float
    aux: object = None


def _grad_at(model: MlpModel, flat_w, batch: LabeledBatch, loss: str):
    probe = MlpModel.from_flat(model.layer_dims, flat_w)
    return loss_and_weighted_grad(probe, batch, loss)


def erm_value_and_direction(model: MlpModel, batch: LabeledBatch, loss: str) -> DirectionResult:
    losses, g = loss_and_weighted_grad(model, batch, loss)
    return DirectionResult(g, float(losses.mean()))


def flood_direction(model: MlpModel, batch: LabeledBatch, loss: str, theta: float) -> DirectionResult:
    losses, g = loss_and_weighted_grad(model, batch, loss)
    risk = float(losses.mean())
    s = hard_sign(risk - theta)
    return DirectionResult(s * g, theta + abs(risk - theta), aux=s)


def iflood_direction(model: MlpModel, batch: LabeledBatch, loss: str, theta: float) -> DirectionResult:
    signs = {}

    def weights(losses):
        signs["value"] = hard_sign(losses - theta)
        return signs["value"]

    losses, g = loss_and_weighted_grad(model, batch, loss, weights=weights)
    value = theta + float(np.mean(np.abs(losses - theta)))
    return DirectionResult(g, value, aux=signs["value"])


def softad_direction(model: MlpModel, batch: LabeledBatch, loss: str, theta: float, sigma: float = 1.0) -> DirectionResult:
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    w = {}

    def weights(losses):
        w["value"] = phi((losses - theta) / sigma)
        return w["value"]

    losses, g = loss_and_weighted_grad(model, batch, loss, weights=weights)
    value = theta + sigma * float(np.mean(rho((losses - theta) / sigma)))
    return DirectionResult(g, value, aux=w["value"])


def gr_exact_direction(model: MlpModel, batch: LabeledBatch, loss: str, lam: float, param_cap: int = GR_PARAM_CAP) -> DirectionResult:
    if model.num_params() > param_cap:
        raise ValueError("model too large for exact GR")
    losses, g = loss_and_weighted_grad(model, batch, loss)
    value = float(losses.mean()) + 0.5 * lam * float(np.dot(g, g))
    gnorm = l2_norm(g) if g.size else 0.0
    if lam == 0 or gnorm == 0.0:
        return DirectionResult(g, value)
    w = model.flatten()
    h = 1e-4 * (1.0 + l2_norm(w))
    v_hat = g / gnorm
    _, g_plus = _grad_at(model, w + h * v_hat, batch, loss)
    _, g_minus = _grad_at(model, w - h * v_hat, batch, loss)
    hv = (g_plus - g_minus) * (gnorm / (2.0 * h))
    return DirectionResult(g + lam * hv, value)


def fdgr_direction(model: MlpModel, batch: LabeledBatch, loss: str, lam: float, a: float) -> DirectionResult:
    if a == 0:
        raise ValueError("fd_step must be nonzero")
    losses, g = loss_and_weighted_grad(model, batch, loss)
    value = float(losses.mean()) + 0.5 * lam * float(np.dot(g, g))
    if lam == 0:
        return DirectionResult(g, value)
    _, g_shift = _grad_at(model, model.flatten() + a * g, batch, loss)
    return DirectionResult(g + (lam / a) * (g_shift - g), value)


def sam_direction(model: MlpModel, batch: LabeledBatch, loss: str, radius: float) -> DirectionResult:
    if not radius > 0:
        raise ValueError("radius must be positive")
    losses, g = loss_and_weighted_grad(model, batch, loss)
    gnorm = l2_norm(g) if g.size else 0.0
    value = float(losses.mean()) + radius * gnorm
    if gnorm == 0.0:
        return DirectionResult(g, value)
    _, g_pert = _grad_at(model, model.flatten() + (radius / gnorm) * g, batch, loss)
    return DirectionResult(g_pert, value)


def direction_for(spec: ObjectiveSpec, model: MlpModel, batch: LabeledBatch, loss: str) -> DirectionResult:
    if spec.kind == "erm":
        return erm_value_and_direction(model, batch, loss)
    if spec.kind == "flood":
        return flood_direction(model, batch, loss, spec.theta)
    if spec.kind == "iflood":
        return iflood_direction(model, batch, loss, spec.theta)
    if spec.kind == "softad":
        return softad_direction(model, batch, loss, spec.theta, spec.sigma)
    if spec.kind == "sam":
        return sam_direction(model, batch, loss, spec.radius)
    if spec.kind == "fdgr":
        return fdgr_direction(model, batch, loss, spec.lam, spec.fd_step)
    if spec.kind == "gr-exact":
        return gr_exact_direction(model, batch, loss, spec.lam)
    raise ValueError(f"unknown objective kind: {spec.kind!r}")


def two_step_flood_residual(value_and_grad, w, theta: float, alpha: float) -> float:
    """Residual of the two-step identity: one flood ascent crossing theta
    followed by one descent must land on w - alpha^2 * (grad(w + alpha g0)
    - g0)/alpha.  ``value_and_grad(w) -> (R, g)`` defines the risk."""
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    r0, g0 = value_and_grad(w)
    if not r0 < theta:
        raise ValueError("crossing condition not met")
    w1 = w - alpha * (hard_sign(r0 - theta) * g0)
    r1, g1 = value_and_grad(w1)
    if not r1 > theta:
        raise ValueError("crossing condition not met")
    w2 = w1 - alpha * (hard_sign(r1 - theta) * g1)

    _, g_probe = value_and_grad(w + alpha * g0)
    rhs = w - (alpha * alpha) * (g_probe - g0) / alpha
    return l2_norm(w2 - rhs) if w2.size else 0.0


def flood_two_step_identity_check(model: MlpModel, batch: LabeledBatch, loss: str, theta: float, alpha: float) -> float:
    """Two flood updates on the batch risk, compared against the
    finite-difference form; returns the residual norm."""

    def value_and_grad(w):
        losses, g = _grad_at(model, w, batch, loss)
        return float(losses.mean()), g

    return two_step_flood_residual(value_and_grad, model.flatten(), theta, alpha)
