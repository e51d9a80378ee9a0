"""Dense ReLU multilayer perceptron with exact per-example gradients.

The model is a plain container of float64 weight matrices and bias
vectors.  Parameters flatten to a single vector (layer by layer, weight
matrix row-major then bias) and the round-trip is bitwise exact, which
the optimizers and the checkpoint format rely on.

Gradients come from handwritten reverse mode.  ``per_example_loss_and_grad``
materializes one gradient row per example; ``loss_and_weighted_grad``
instead folds per-example weights into the output deltas before the
backward pass, returning the weighted mean gradient at the cost of a
single backprop.  Both agree with ``finite_diff_grad`` to 1e-6.

Checkpoint layout (little-endian): magic ``MLP1``, int64 count of layer
dims, the dims as int64, then the flat float64 parameter vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import require_finite

LOSS_KINDS = ("cross-entropy", "squared-error")

_MAGIC = b"MLP1"


@dataclass
class LabeledBatch:
    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels)
        if self.inputs.ndim != 2 or self.inputs.shape[0] < 1:
            raise ValueError("inputs must be a nonempty n x d matrix")
        if self.labels.shape != (self.inputs.shape[0],):
            raise ValueError("labels must be one index per input row")
        if not np.issubdtype(self.labels.dtype, np.integer):
            raise ValueError("labels must be integers")
        if self.labels.min() < 0:
            raise ValueError("invalid label")
        require_finite("inputs", self.inputs)

    def __len__(self):
        return self.inputs.shape[0]


@dataclass
class MlpModel:
    layer_dims: tuple
    weights: list
    biases: list

    def __post_init__(self):
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        if len(self.layer_dims) < 2 or any(d < 1 for d in self.layer_dims):
            raise ValueError("layer_dims needs at least input and output sizes")
        expect = list(zip(self.layer_dims[:-1], self.layer_dims[1:]))
        if [w.shape for w in self.weights] != expect:
            raise ValueError("weight shapes do not match layer_dims")
        if [b.shape for b in self.biases] != [(o,) for _, o in expect]:
            raise ValueError("bias shapes do not match layer_dims")

    @classmethod
    def initialize(cls, layer_dims, rng) -> "MlpModel":
        """Symmetric uniform weights with limit sqrt(6/(fan_in+fan_out)),
        zero biases."""
        weights, biases = [], []
        for fi, fo in zip(layer_dims[:-1], layer_dims[1:]):
            limit = np.sqrt(6.0 / (fi + fo))
            weights.append(rng.uniform(-limit, limit, size=(fi, fo)))
            biases.append(np.zeros(fo))
        return cls(tuple(layer_dims), weights, biases)

    @classmethod
    def from_flat(cls, layer_dims, flat) -> "MlpModel":
        flat = np.asarray(flat, dtype=np.float64).reshape(-1)
        weights, biases, k = [], [], 0
        for fi, fo in zip(layer_dims[:-1], layer_dims[1:]):
            weights.append(flat[k : k + fi * fo].reshape(fi, fo).copy())
            k += fi * fo
            biases.append(flat[k : k + fo].copy())
            k += fo
        if k != flat.size:
            raise ValueError("parameter vector length does not match layer_dims")
        return cls(tuple(layer_dims), weights, biases)

    def num_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def flatten(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def set_flat(self, flat) -> None:
        flat = np.asarray(flat, dtype=np.float64).reshape(-1)
        if flat.size != self.num_params():
            raise ValueError("parameter vector length does not match layer_dims")
        k = 0
        for w, b in zip(self.weights, self.biases):
            w[...] = flat[k : k + w.size].reshape(w.shape)
            k += w.size
            b[...] = flat[k : k + b.size]
            k += b.size

    def forward(self, inputs) -> np.ndarray:
        return mlp_forward(self, inputs)

    def save(self, path) -> None:
        dims = np.asarray(self.layer_dims, dtype="<i8")
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(np.asarray([dims.size], dtype="<i8").tobytes())
            fh.write(dims.tobytes())
            fh.write(self.flatten().astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> "MlpModel":
        with open(path, "rb") as fh:
            raw = fh.read()
        if raw[:4] != _MAGIC:
            raise ValueError("not a model checkpoint")
        n_dims = int(np.frombuffer(raw, dtype="<i8", count=1, offset=4)[0])
        dims = np.frombuffer(raw, dtype="<i8", count=n_dims, offset=12)
        flat = np.frombuffer(raw, dtype="<f8", offset=12 + 8 * n_dims)
        return cls.from_flat(tuple(int(d) for d in dims), flat)


def mlp_forward(model: MlpModel, inputs) -> np.ndarray:
    """Logits for an n x input_dim matrix: affine(ReLU(...affine(x)))."""
    a = np.asarray(inputs, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != model.layer_dims[0]:
        raise ValueError("inputs width does not match model input size")
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        a = a @ w + b
        if i != last:
            a = np.maximum(a, 0.0)
    return a


def _forward_cached(model: MlpModel, inputs):
    # activations[i] feeds layer i; preacts hold post-affine values
    acts = [np.asarray(inputs, dtype=np.float64)]
    if acts[0].ndim != 2 or acts[0].shape[1] != model.layer_dims[0]:
        raise ValueError("inputs width does not match model input size")
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = acts[-1] @ w + b
        acts.append(np.maximum(z, 0.0) if i != last else z)
    return acts


def _losses_and_output_deltas(logits, labels, loss):
    n, k = logits.shape
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError("invalid label")
    rows = np.arange(n)
    if loss == "cross-entropy":
        m = logits.max(axis=1, keepdims=True)
        e = np.exp(logits - m)
        p = e / e.sum(axis=1, keepdims=True)
        losses = (m[:, 0] + np.log(e.sum(axis=1))) - logits[rows, labels]
        deltas = p.copy()
        deltas[rows, labels] -= 1.0
    elif loss == "squared-error":
        r = logits.copy()
        r[rows, labels] -= 1.0
        losses = 0.5 * np.einsum("nk,nk->n", r, r)
        deltas = r
    else:
        raise ValueError(f"unknown loss kind: {loss!r}")
    return losses, deltas


def per_example_loss_and_grad(model: MlpModel, batch: LabeledBatch, loss: str):
    """Per-example losses and one flat gradient row per example (n x d)."""
    acts = _forward_cached(model, batch.inputs)
    losses, delta = _losses_and_output_deltas(acts[-1], batch.labels, loss)
    n = len(batch)
    grads = np.empty((n, sum(w.size + b.size for w, b in zip(model.weights, model.biases))))
    k = grads.shape[1]
    for i in range(len(model.weights) - 1, -1, -1):
        w = model.weights[i]
        k -= w.shape[1]
        grads[:, k : k + w.shape[1]] = delta
        k -= w.size
        gw = np.einsum("ni,nj->nij", acts[i], delta)
        grads[:, k : k + w.size] = gw.reshape(n, w.size)
        if i > 0:
            delta = (delta @ w.T) * (acts[i] > 0.0)
    return losses, grads


def loss_and_weighted_grad(model: MlpModel, batch: LabeledBatch, loss: str, weights=None):
    """Per-example losses and the weighted mean gradient (1/n) sum_i c_i g_i
    in one backward pass; ``weights=None`` means all c_i = 1, and a callable
    receives the loss vector and returns the c_i (for loss-dependent
    truncator weights)."""
    acts = _forward_cached(model, batch.inputs)
    losses, delta = _losses_and_output_deltas(acts[-1], batch.labels, loss)
    n = len(batch)
    if callable(weights):
        weights = weights(losses)
    if weights is None:
        weights = np.ones(n)
    scale = np.asarray(weights, dtype=np.float64) / n
    delta = delta * scale[:, None]
    parts = [None] * (2 * len(model.weights))
    for i in range(len(model.weights) - 1, -1, -1):
        parts[2 * i] = (acts[i].T @ delta).ravel()
        parts[2 * i + 1] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ model.weights[i].T) * (acts[i] > 0.0)
    return losses, np.concatenate(parts)


def finite_diff_grad(f, w, h: float) -> np.ndarray:
    """Central differences (f(w+h e_j) - f(w-h e_j))/(2h), one coordinate
    at a time."""
    if h <= 0:
        raise ValueError("step must be positive")
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    g = np.empty(w.size)
    for j in range(w.size):
        wp, wm = w.copy(), w.copy()
        wp[j] += h
        wm[j] -= h
        g[j] = (f(wp) - f(wm)) / (2.0 * h)
    return g
