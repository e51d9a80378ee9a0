"""Seeded synthetic datasets and the closed-form demo problems.

Each classification generator returns disjoint train/val/test splits
drawn from fresh RNG substreams of the spec's seed, never partitions of
one pool, so the splits are independent samples from the same process.
Passing an explicit generator instead draws all three splits from it in
sequence (train, val, test).

The 2D mean-estimation demo uses the per-point loss ||w - z||^2 on raw
parameters (no model), for which the batch risk is quadratic with its
minimum at the sample mean.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .losses import hard_sign, phi, rho
from .models import LabeledBatch
from .numerics import (
    KEY_DATA_TEST,
    KEY_DATA_TRAIN,
    KEY_DATA_VAL,
    KEY_DEMO_CANDIDATES,
    KEY_DEMO_POINTS,
    substream,
)

DATASET_KINDS = ("two-gaussians", "sinusoid", "spiral", "two-d-mean")

TWO_GAUSSIANS_MEANS = (np.array([0.0, 0.0]), np.array([2.0, 2.0]))
SPIRAL_T_RANGE = (0.25, 3.5)
SPIRAL_NOISE = 0.1


@dataclass(frozen=True)
class SyntheticSpec:
    """What to generate: counts are per split; ``noise`` is the label-flip
    rate for the sinusoid and the coordinate noise sigma for the spiral
    (None picks the per-kind default)."""

    kind: str
    n_train: int = 100
    n_val: int = 100
    n_test: int = 20000
    noise: float = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in DATASET_KINDS:
            raise ValueError(f"unknown dataset kind: {self.kind!r}")
        if min(self.n_train, self.n_val, self.n_test) < 1:
            raise ValueError("split sizes must be >= 1")
        if self.noise is not None:
            if self.kind == "two-gaussians":
                raise ValueError("two-gaussians takes no noise parameter")
            if self.noise < 0:
                raise ValueError("noise must be nonnegative")


def _stratified_labels(n: int, rng) -> np.ndarray:
    # class counts differ by at most one; order shuffled by the stream
    labels = np.zeros(n, dtype=np.int64)
    labels[n // 2 :] = 1
    return labels[rng.permutation(n)]


def _sample_two_gaussians(n: int, rng) -> LabeledBatch:
    labels = _stratified_labels(n, rng)
    means = np.stack([TWO_GAUSSIANS_MEANS[y] for y in labels])
    return LabeledBatch(means + rng.standard_normal((n, 2)), labels)


def _sample_sinusoid(n: int, rng, flip_rate: float) -> LabeledBatch:
    x = rng.uniform(-1.0, 1.0, size=(n, 2))
    labels = (x[:, 1] > 0.5 * np.sin(np.pi * x[:, 0])).astype(np.int64)
    if flip_rate > 0:
        flips = rng.random(n) < flip_rate
        labels = np.where(flips, 1 - labels, labels)
    return LabeledBatch(x, labels)


def spiral_arm(t, label: int) -> np.ndarray:
    """Noise-free arm point(s) at parameter t for the given class."""
    t = np.asarray(t, dtype=np.float64)
    angle = 2.0 * t + np.pi * label
    return np.stack([t * np.cos(angle), t * np.sin(angle)], axis=-1)


def _sample_spiral(n: int, rng, noise_sigma: float) -> LabeledBatch:
    labels = _stratified_labels(n, rng)
    t = rng.uniform(*SPIRAL_T_RANGE, size=n)
    pts = spiral_arm(t, 0)
    flip = labels == 1
    pts[flip] = spiral_arm(t[flip], 1)
    if noise_sigma > 0:
        pts = pts + noise_sigma * rng.standard_normal((n, 2))
    return LabeledBatch(pts, labels)


def _three_streams(spec: SyntheticSpec, rng):
    if rng is not None:
        return rng, rng, rng
    return (
        substream(spec.seed, KEY_DATA_TRAIN),
        substream(spec.seed, KEY_DATA_VAL),
        substream(spec.seed, KEY_DATA_TEST),
    )


def gen_two_gaussians(spec: SyntheticSpec, rng=None):
    """Balanced two-class Gaussians at (0,0) and (2,2) with unit covariance."""
    r_train, r_val, r_test = _three_streams(spec, rng)
    return (
        _sample_two_gaussians(spec.n_train, r_train),
        _sample_two_gaussians(spec.n_val, r_val),
        _sample_two_gaussians(spec.n_test, r_test),
    )


def gen_sinusoid(spec: SyntheticSpec, rng=None):
    """Uniform points on [-1,1]^2 labeled by x2 > 0.5*sin(pi*x1)."""
    flip = 0.0 if spec.noise is None else spec.noise
    r_train, r_val, r_test = _three_streams(spec, rng)
    return (
        _sample_sinusoid(spec.n_train, r_train, flip),
        _sample_sinusoid(spec.n_val, r_val, flip),
        _sample_sinusoid(spec.n_test, r_test, flip),
    )


def gen_spiral(spec: SyntheticSpec, rng=None):
    """Two interleaved arms t*(cos(2t+pi*y), sin(2t+pi*y)) plus noise."""
    sigma = SPIRAL_NOISE if spec.noise is None else spec.noise
    r_train, r_val, r_test = _three_streams(spec, rng)
    return (
        _sample_spiral(spec.n_train, r_train, sigma),
        _sample_spiral(spec.n_val, r_val, sigma),
        _sample_spiral(spec.n_test, r_test, sigma),
    )


def generate(spec: SyntheticSpec, rng=None):
    if spec.kind == "two-gaussians":
        return gen_two_gaussians(spec, rng)
    if spec.kind == "sinusoid":
        return gen_sinusoid(spec, rng)
    if spec.kind == "spiral":
        return gen_spiral(spec, rng)
    raise ValueError(f"{spec.kind!r} is not a classification dataset")


def gen_2dmean(rng) -> np.ndarray:
    """8 i.i.d. draws from the 2D Gaussian with standard deviation 2*sqrt(2)
    per coordinate."""
    return np.sqrt(8.0) * rng.standard_normal((8, 2))


def two_d_mean_risk(w, points) -> float:
    """Mean of ||w - z||^2 over the sample."""
    diff = np.asarray(w, dtype=np.float64) - points
    return float(np.mean(np.einsum("nd,nd->n", diff, diff)))


def two_d_mean_config(points):
    """(theta, alpha) for the mean-estimation demo: theta is 1.5 times the
    minimal risk (attained at the sample mean), alpha is 0.75."""
    points = np.asarray(points, dtype=np.float64)
    r_min = two_d_mean_risk(points.mean(axis=0), points)
    return 1.5 * r_min, 0.75


def two_d_mean_directions(w, points, theta: float, sigma: float = 1.0) -> dict:
    """ERM/Flood/SoftAD update directions at w for the demo loss, plus the
    per-point SoftAD transformed gradients (whose mean is the direction)."""
    w = np.asarray(w, dtype=np.float64)
    points = np.asarray(points, dtype=np.float64)
    per_losses = np.einsum("nd,nd->n", w - points, w - points)
    per_grads = 2.0 * (w - points)
    erm = per_grads.mean(axis=0)
    risk = float(per_losses.mean())
    weights = phi((per_losses - theta) / sigma)
    transformed = weights[:, None] * per_grads
    return {
        "risk": risk,
        "erm": erm,
        "flood": hard_sign(risk - theta) * erm,
        "flood_flag": hard_sign(risk - theta),
        "softad": transformed.mean(axis=0),
        "softad_value": theta + sigma * float(np.mean(rho((per_losses - theta) / sigma))),
        "per_point_weights": weights,
        "per_point_transformed": transformed,
    }


def two_d_mean_candidates(points, theta: float, seed: int):
    """Two deterministic probe points: one outside the theta level set of
    the risk, one inside it."""
    points = np.asarray(points, dtype=np.float64)
    mean = points.mean(axis=0)
    r_min = two_d_mean_risk(mean, points)
    # risk(w) = r_min + ||w - mean||^2, so the level set is a circle
    level = np.sqrt(max(theta - r_min, 0.0))
    rng = substream(seed, KEY_DEMO_CANDIDATES)
    angles = rng.uniform(0.0, 2.0 * np.pi, size=2)
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    outside = mean + 2.0 * level * dirs[0]
    inside = mean + 0.4 * level * dirs[1]
    return outside, inside


def demo_points(seed: int) -> np.ndarray:
    return gen_2dmean(substream(seed, KEY_DEMO_POINTS))


def quadratic_demo_step(x: float, method: str, theta: float, sigma: float, alpha: float) -> float:
    """One update on f(x) = x^2/2 (gradient x) under the chosen rule."""
    f = 0.5 * x * x
    if method == "gd":
        return x - alpha * x
    if method == "flood":
        return x - alpha * hard_sign(f - theta) * x
    if method == "softad":
        return x - alpha * phi((f - theta) / sigma) * x
    raise ValueError(f"unknown demo method: {method!r}")


def quadratic_demo_trajectories(steps: int, theta: float = 0.5, sigma: float = 1.0, alpha: float = 0.1, x0: float = 2.0):
    """Iterate GD, Flood, and the soft rule side by side from x0; returns
    a dict of trajectories of length steps+1 (including x0)."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    out = {m: np.empty(steps + 1) for m in ("gd", "flood", "softad")}
    for m in out:
        x = float(x0)
        out[m][0] = x
        for t in range(1, steps + 1):
            x = quadratic_demo_step(x, m, theta, sigma, alpha)
            out[m][t] = x
    return out


def write_dataset_csv(path, batch: LabeledBatch) -> None:
    """CSV dump with header x1,x2,label; floats in shortest round-trip form."""
    if batch.inputs.shape[1] != 2:
        raise ValueError("dataset dump expects 2D inputs")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x1", "x2", "label"])
        for (x1, x2), y in zip(batch.inputs, batch.labels):
            writer.writerow([repr(float(x1)), repr(float(x2)), int(y)])


def read_dataset_csv(path) -> LabeledBatch:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["x1", "x2", "label"]:
            raise ValueError("unexpected dataset header")
        rows = [(float(a), float(b), int(c)) for a, b, c in reader]
    inputs = np.array([[a, b] for a, b, _ in rows])
    labels = np.array([c for _, _, c in rows], dtype=np.int64)
    return LabeledBatch(inputs, labels)
