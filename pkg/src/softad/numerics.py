"""Vector primitives and seeded randomness shared by every optimizer.

All numeric state in this package is a row-major ``float64`` numpy array.
Randomness always flows through :func:`substream`, which builds a
``numpy.random.Generator`` on the PCG64 bit generator from an integer seed
plus a tuple of integer domain keys.  PCG64 is a fixed, documented algorithm
with platform-independent streams, so every artifact this package emits is
reproducible from its seed alone.
"""

from __future__ import annotations

import numpy as np

# Domain keys for deriving independent substreams from one trial seed.
# Distinct keys guarantee the data, init, and shuffle streams never overlap.
KEY_DATA_TRAIN = 11
KEY_DATA_VAL = 12
KEY_DATA_TEST = 13
KEY_MODEL_INIT = 21
KEY_EPOCH_SHUFFLE = 22
KEY_DEMO_POINTS = 31
KEY_DEMO_CANDIDATES = 32


def substream(seed: int, *keys: int) -> np.random.Generator:
    """Deterministic RNG substream for ``(seed, *keys)``.

    Two calls with equal arguments yield generators producing identical
    streams; distinct key tuples yield statistically independent streams.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, keys)])))


def as_vector(v) -> np.ndarray:
    """View ``v`` as a flat float64 array without copying when possible."""
    return np.asarray(v, dtype=np.float64).reshape(-1)


def require_finite(name: str, arr: np.ndarray) -> np.ndarray:
    """Reject NaN/Inf entries at construction boundaries."""
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def l2_norm(v) -> float:
    """Euclidean norm of a flat vector; errors on an empty operand."""
    v = as_vector(v)
    if v.size == 0:
        raise ValueError("empty operand")
    return float(np.sqrt(np.dot(v, v)))


def clip_to_norm(v, gamma: float) -> np.ndarray:
    """Scale ``v`` onto the ball of radius ``gamma`` when it lies outside.

    Returns ``v * min(1, gamma/||v||)``.  The zero vector passes through
    untouched.  The result is guaranteed to re-enter the "already inside"
    branch on a second call, so clipping is bitwise idempotent.
    """
    if gamma <= 0:
        raise ValueError("invalid radius")
    v = as_vector(v)
    n = l2_norm(v)
    if n <= gamma:
        return v.copy()
    w = v * (gamma / n)
    # One rescale is not always enough in floating point; force the norm
    # at or below gamma so a repeated clip is a no-op.
    m = l2_norm(w)
    while m > gamma:
        w = w * (gamma / m)
        m = l2_norm(w)
    return w


def project_to_ball(v, radius: float) -> np.ndarray:
    """Euclidean projection onto the centered ball of the given radius."""
    if radius <= 0:
        raise ValueError("invalid radius")
    return clip_to_norm(v, radius)


def sample_unit_sphere(d: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw from the unit sphere in R^d (normalized Gaussian)."""
    if d < 1:
        raise ValueError("dimension must be >= 1")
    while True:
        u = rng.standard_normal(d)
        n = np.sqrt(np.dot(u, u))
        if n > 0.0:  # an exact zero draw is retried
            return u / n
