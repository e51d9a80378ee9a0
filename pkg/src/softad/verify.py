"""Self-contained invariant checks behind the ``verify`` subcommand.

Each check measures one quantity against a pinned tolerance and the
runner reports one line per registered check.  The φ perturbation hook
exists so the gradient-consistency check can be demonstrated to fail on
a broken build; it is strictly a negative control.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import objectives
from .datasets import (
    gen_2dmean,
    two_d_mean_candidates,
    two_d_mean_config,
    two_d_mean_directions,
)
from .losses import phi, rho
from .models import LabeledBatch, MlpModel, finite_diff_grad, per_example_loss_and_grad
from .numerics import l2_norm, substream
from .objectives import (
    erm_value_and_direction,
    fdgr_direction,
    flood_two_step_identity_check,
    gr_exact_direction,
    sam_direction,
    softad_direction,
    two_step_flood_residual,
)
from .optimizers import (
    NormalizedMomentumState,
    ZerothOrderParams,
    normalized_momentum_step,
    momentum_schedule,
    zeroth_order_gradient,
)

FD_STEP = 1e-5


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    measured: float
    tolerance: float
    detail: str = ""


def _min_abs_preactivation(model: MlpModel, inputs) -> float:
    worst = np.inf
    h = np.asarray(inputs, dtype=np.float64)
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        worst = min(worst, float(np.min(np.abs(z))))
        h = z if i == len(model.weights) - 1 else np.maximum(z, 0.0)
    return worst


def _random_smooth_case(rng):
    # central differences straddle the ReLU kink when a preactivation
    # sits within the probe step of 0, so resample until clear of kinks
    while True:
        dims = (
            int(rng.integers(2, 5)),
            *(int(rng.integers(3, 9)) for _ in range(int(rng.integers(1, 3)))),
            int(rng.integers(2, 4)),
        )
        model = MlpModel.initialize(dims, rng)
        n = int(rng.integers(3, 9))
        inputs = rng.standard_normal((n, dims[0]))
        labels = rng.integers(0, dims[-1], size=n).astype(np.int64)
        if _min_abs_preactivation(model, inputs) >= 1e-3:
            return model, LabeledBatch(inputs, labels)


def _loss_kind(i: int) -> str:
    return "cross-entropy" if i % 2 == 0 else "squared-error"


def _rel_err(direction, fd) -> float:
    scale = max(l2_norm(fd), 1e-12)
    return float(l2_norm(np.asarray(direction) - np.asarray(fd)) / scale)


def _fd(scalar_of_w, flat_w):
    return finite_diff_grad(scalar_of_w, flat_w, FD_STEP)


def check_per_example_gradients(cases: int = 10) -> CheckResult:
    worst = 0.0
    for i in range(cases):
        model, batch = _random_smooth_case(substream(101, i))
        loss = _loss_kind(i)
        _, grads = per_example_loss_and_grad(model, batch, loss)
        dims = model.layer_dims
        for j in range(len(batch)):
            one = LabeledBatch(batch.inputs[j : j + 1], batch.labels[j : j + 1])

            def f(w):
                probe = MlpModel.from_flat(dims, w)
                losses, _ = per_example_loss_and_grad(probe, one, loss)
                return float(losses[0])

            worst = max(worst, _rel_err(grads[j], _fd(f, model.flatten())))
    return CheckResult("per_example_gradients", worst <= 1e-6, worst, 1e-6)


def check_erm_direction(cases: int = 10) -> CheckResult:
    worst = 0.0
    for i in range(cases):
        model, batch = _random_smooth_case(substream(102, i))
        loss = _loss_kind(i)
        res = erm_value_and_direction(model, batch, loss)
        dims = model.layer_dims

        def f(w):
            probe = MlpModel.from_flat(dims, w)
            return erm_value_and_direction(probe, batch, loss).objective_value

        worst = max(worst, _rel_err(res.direction, _fd(f, model.flatten())))
    return CheckResult("erm_direction", worst <= 1e-6, worst, 1e-6)


def check_softad_direction(cases: int = 10) -> CheckResult:
    worst = 0.0
    for i in range(cases):
        model, batch = _random_smooth_case(substream(103, i))
        loss = _loss_kind(i)
        rng = substream(104, i)
        theta = float(rng.uniform(0.0, 1.0))
        sigma = float(rng.uniform(0.5, 2.0))
        res = softad_direction(model, batch, loss, theta, sigma)
        dims = model.layer_dims

        def f(w):
            probe = MlpModel.from_flat(dims, w)
            return softad_direction(probe, batch, loss, theta, sigma).objective_value

        worst = max(worst, _rel_err(res.direction, _fd(f, model.flatten())))
    return CheckResult("softad_direction", worst <= 1e-6, worst, 1e-6)


def _gr_objective(dims, batch, loss, lam):
    def f(w):
        probe = MlpModel.from_flat(dims, w)
        res = erm_value_and_direction(probe, batch, loss)
        return res.objective_value + 0.5 * lam * l2_norm(res.direction) ** 2

    return f


def check_fdgr_objective_gradient(cases: int = 4) -> CheckResult:
    lam = 0.1
    worst = 0.0
    for i in range(cases):
        model, batch = _random_smooth_case(substream(105, i))
        loss = _loss_kind(i)
        res = fdgr_direction(model, batch, loss, lam, 1e-7)
        fd = _fd(_gr_objective(model.layer_dims, batch, loss, lam), model.flatten())
        worst = max(worst, _rel_err(res.direction, fd))
    return CheckResult("fdgr_objective_gradient", worst <= 1e-6, worst, 1e-6)


def check_gr_exact_direction(cases: int = 4) -> CheckResult:
    lam = 0.1
    worst = 0.0
    for i in range(cases):
        model, batch = _random_smooth_case(substream(106, i))
        loss = _loss_kind(i)
        res = gr_exact_direction(model, batch, loss, lam)
        fd = _fd(_gr_objective(model.layer_dims, batch, loss, lam), model.flatten())
        worst = max(worst, _rel_err(res.direction, fd))
    return CheckResult("gr_exact_direction", worst <= 1e-4, worst, 1e-4)


def check_two_step_identity_quadratic() -> CheckResult:
    def value_and_grad(w):
        return 0.5 * w[0] ** 2, np.array([w[0]])

    residual = two_step_flood_residual(value_and_grad, np.array([0.95]), 0.5, 0.1)
    # replay the two steps to also pin the landing point
    x1 = 0.95 + 0.1 * 0.95
    x2 = x1 - 0.1 * x1
    landing = abs(x2 - 0.9405)
    measured = max(residual, landing)
    return CheckResult("two_step_identity_quadratic", measured <= 1e-12, measured, 1e-12)


def check_two_step_identity_mlp(cases: int = 5) -> CheckResult:
    alpha = 0.05
    worst = 0.0
    for i in range(cases):
        model, batch = _random_smooth_case(substream(107, i))
        loss = _loss_kind(i)
        res0 = erm_value_and_direction(model, batch, loss)
        r0, g0 = res0.objective_value, res0.direction
        w = model.flatten()
        probe = MlpModel.from_flat(model.layer_dims, w + alpha * g0)
        r1 = erm_value_and_direction(probe, batch, loss).objective_value
        if not r1 > r0:
            continue
        theta = 0.5 * (r0 + r1)
        residual = flood_two_step_identity_check(model, batch, loss, theta, alpha)
        worst = max(worst, residual / (1.0 + l2_norm(w)))
    return CheckResult("two_step_identity_mlp", worst <= 1e-10, worst, 1e-10)


def _quadratic_bias_case(k: int = 3):
    # zero inputs make the logits equal the output bias, so squared
    # error is a pure quadratic in the bias block with unit Hessian
    rng = substream(108)
    b = rng.standard_normal(k)
    model = MlpModel((1, k), [np.zeros((1, k))], [b])
    batch = LabeledBatch(np.zeros((4, 1)), rng.integers(0, k, size=4).astype(np.int64))
    return model, batch


def check_fdgr_matches_exact_gr_on_quadratic() -> CheckResult:
    model, batch = _quadratic_bias_case()
    lam = 0.3
    worst = 0.0
    for a in (0.5, 0.05, 0.001):
        fd = fdgr_direction(model, batch, "squared-error", lam, a).direction
        exact = gr_exact_direction(model, batch, "squared-error", lam).direction
        worst = max(worst, _rel_err(fd, exact))
    return CheckResult("fdgr_matches_exact_gr_on_quadratic", worst <= 1e-10, worst, 1e-10)


def check_sam_tiny_radius_matches_erm() -> CheckResult:
    worst = 0.0
    for i in range(4):
        model, batch = _random_smooth_case(substream(109, i))
        loss = _loss_kind(i)
        sam = sam_direction(model, batch, loss, 1e-8).direction
        erm = erm_value_and_direction(model, batch, loss).direction
        worst = max(worst, _rel_err(sam, erm))
    return CheckResult("sam_tiny_radius_matches_erm", worst <= 1e-6, worst, 1e-6)


def check_fdgr_error_first_order() -> CheckResult:
    model, batch = _random_smooth_case(substream(110, 0))
    lam = 0.1
    exact = gr_exact_direction(model, batch, "cross-entropy", lam).direction
    errors = [
        l2_norm(fdgr_direction(model, batch, "cross-entropy", lam, a).direction - exact)
        for a in (1e-2, 1e-3, 1e-4)
    ]
    ratios = [errors[0] / errors[1], errors[1] / errors[2]]
    ok = all(5.0 <= r <= 20.0 for r in ratios)
    measured = max(ratios, key=lambda r: abs(r - 10.0))
    return CheckResult("fdgr_error_first_order", ok, measured, 20.0, detail="band [5, 20]")


def check_zeroth_order_unbiased(draws: int = 10**5) -> CheckResult:
    r, w = 0.1, 0.7
    zo = ZerothOrderParams(r=r, theta=0.0, d=1)
    rng = substream(111)
    samples = np.empty(draws)
    point = np.array([w])
    for i in range(draws):
        samples[i] = zeroth_order_gradient(zo, lambda v: float(v[0] ** 2), point, rng)[0]

    def h(x):
        return rho(x * x)

    exact = (h(w + r) - h(w - r)) / (2.0 * r)
    se = samples.std(ddof=1) / np.sqrt(draws)
    deviation_in_se = abs(samples.mean() - exact) / se
    return CheckResult("zeroth_order_unbiased", deviation_in_se <= 3.0, float(deviation_in_se), 3.0)


def _momentum_toy_run(T: int, points, theta, sigma, w0):
    losses0 = np.sum((w0 - points) ** 2, axis=1)
    grads0 = 2.0 * (w0 - points)
    proxy = float(np.max(np.sum((phi((losses0 - theta) / sigma)[:, None] * grads0) ** 2, axis=1)))
    alpha, b, gamma = momentum_schedule(T, proxy)
    state = NormalizedMomentumState(alpha=alpha, b=b, gamma=gamma)
    idx = substream(112, T).integers(0, len(points), size=T)
    w = w0.copy()
    norm_sum = 0.0
    worst_step = 0.0
    worst_clip = 0.0
    for t in range(T):
        full = two_d_mean_directions(w, points, theta, sigma)["softad"]
        norm_sum += l2_norm(full)
        z = points[idx[t]]
        loss = float(np.sum((w - z) ** 2))
        g = phi((loss - theta) / sigma) * 2.0 * (w - z)
        clipped_norm = min(l2_norm(g), gamma)
        worst_clip = max(worst_clip, clipped_norm / gamma - 1.0)
        w_next = normalized_momentum_step(state, w, g)
        step_norm = l2_norm(w_next - w)
        if step_norm != 0.0:
            worst_step = max(worst_step, abs(step_norm - alpha))
        w = w_next
    return norm_sum / T, worst_step, worst_clip


def _momentum_toy_measurements():
    points = gen_2dmean(substream(113))
    theta, _ = two_d_mean_config(points)
    sigma = 1.0
    w0, _ = two_d_mean_candidates(points, theta, seed=0)
    out = {}
    for T in (10**2, 10**3, 10**4):
        out[T] = _momentum_toy_run(T, points, theta, sigma, w0)
    return out


_MOMENTUM_TOY_CACHE: dict = {}


def _momentum_toy_cached():
    if not _MOMENTUM_TOY_CACHE:
        _MOMENTUM_TOY_CACHE.update(_momentum_toy_measurements())
    return _MOMENTUM_TOY_CACHE


def check_momentum_step_norms() -> CheckResult:
    worst = max(v[1] for v in _momentum_toy_cached().values())
    return CheckResult("momentum_step_norms", worst <= 1e-12, worst, 1e-12)


def check_momentum_clip_bound() -> CheckResult:
    worst = max(v[2] for v in _momentum_toy_cached().values())
    return CheckResult("momentum_clip_bound", worst <= 1e-12, worst, 1e-12)


def check_momentum_stationarity_decay() -> CheckResult:
    avgs = [v[0] for _, v in sorted(_momentum_toy_cached().items())]
    increases = [b - a for a, b in zip(avgs, avgs[1:])]
    measured = max(increases)
    return CheckResult(
        "momentum_stationarity_decay", measured <= 0.0, measured, 0.0,
        detail="averages " + ",".join(f"{a:.6g}" for a in avgs),
    )


CHECKS = (
    check_per_example_gradients,
    check_erm_direction,
    check_softad_direction,
    check_fdgr_objective_gradient,
    check_gr_exact_direction,
    check_two_step_identity_quadratic,
    check_two_step_identity_mlp,
    check_fdgr_matches_exact_gr_on_quadratic,
    check_sam_tiny_radius_matches_erm,
    check_fdgr_error_first_order,
    check_zeroth_order_unbiased,
    check_momentum_step_norms,
    check_momentum_clip_bound,
    check_momentum_stationarity_decay,
)


def _perturbed_phi(x):
    return phi(x) * 1.001


def run_checks(perturb_phi: bool = False):
    """Run every registered check and return the results in order.

    With ``perturb_phi`` the soft truncator used by direction code is
    deliberately skewed before running, as a negative control; the
    original is always restored.
    """
    _MOMENTUM_TOY_CACHE.clear()
    original = objectives.phi
    if perturb_phi:
        objectives.phi = _perturbed_phi
    try:
        return [check() for check in CHECKS]
    finally:
        objectives.phi = original
        _MOMENTUM_TOY_CACHE.clear()


def report_lines(results) -> list:
    lines = []
    for r in results:
        status = "pass" if r.passed else "fail"
        line = f"{r.name} {status} measured={r.measured!r} tol={r.tolerance!r}"
        if r.detail:
            line += f" # {r.detail}"
        lines.append(line)
    return lines
