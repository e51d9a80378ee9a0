"""Scalar loss primitives and the truncators that wrap them.

``rho`` is the smooth even potential sqrt(x^2+1)-1 and ``phi`` its
derivative x/sqrt(x^2+1); both accept scalars or arrays elementwise.
``hard_sign`` is the exact three-valued sign with sign(0)=0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "TruncatorParams",
    "rho",
    "phi",
    "hard_sign",
    "cross_entropy",
    "cross_entropy_batch",
    "squared_error",
]


@dataclass(frozen=True)
class TruncatorParams:
    """Threshold and scale shared by the wrapped objectives."""

    theta: float
    sigma: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.theta):
            raise ValueError("theta must be finite")
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError("sigma must be positive")


def _match_input(x, out):
    return float(out) if np.ndim(x) == 0 else out


def rho(x):
    """sqrt(x^2+1)-1, elementwise, without cancellation near 0."""
    a = np.abs(np.asarray(x, dtype=np.float64))
    h = np.hypot(a, 1.0)
    # x^2/(h+1) is exact for small x; h-1 is safe once |x| >= 1,
    # and squaring is skipped there so huge inputs cannot overflow.
    small = a < 1.0
    sq = np.square(np.where(small, a, 0.0))
    out = np.where(small, sq / (h + 1.0), h - 1.0)
    return _match_input(x, out)


def phi(x):
    """x/sqrt(x^2+1), the derivative of rho; odd, bounded by 1."""
    x_arr = np.asarray(x, dtype=np.float64)
    return _match_input(x, x_arr / np.hypot(x_arr, 1.0))


def hard_sign(x):
    """Three-valued sign: x/|x| for x != 0 and exactly 0 at 0."""
    return _match_input(x, np.sign(np.asarray(x, dtype=np.float64)))


def cross_entropy(logits, label: int) -> float:
    """-log softmax(logits)[label] for one logit row, via max-shifted
    log-sum-exp so huge logits cannot overflow."""
    z = np.asarray(logits, dtype=np.float64).reshape(-1)
    label = int(label)
    if not 0 <= label < z.size:
        raise ValueError("invalid label")
    m = np.max(z)
    return float(m + np.log(np.sum(np.exp(z - m))) - z[label])


def cross_entropy_batch(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Row-wise cross-entropy for an n x k logit matrix."""
    z = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    if z.ndim != 2:
        raise ValueError("logits must be n x k")
    if labels.shape != (z.shape[0],):
        raise ValueError("labels must be one index per row")
    if labels.size and (labels.min() < 0 or labels.max() >= z.shape[1]):
        raise ValueError("invalid label")
    m = z.max(axis=1)
    lse = m + np.log(np.exp(z - m[:, None]).sum(axis=1))
    return lse - z[np.arange(z.shape[0]), labels]


def squared_error(logits, label: int) -> float:
    """0.5 * squared distance between a logit row and the one-hot target."""
    z = np.asarray(logits, dtype=np.float64).reshape(-1)
    label = int(label)
    if not 0 <= label < z.size:
        raise ValueError("invalid label")
    r = z.copy()
    r[label] -= 1.0
    return float(0.5 * np.dot(r, r))
