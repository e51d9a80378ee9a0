"""Scikit-learn estimator facade over the training loop.

``AscentDescentClassifier`` exposes the threshold objectives through the
familiar fit/predict surface so they can sit inside pipelines and grid
searches.  Hyperparameters mirror the trial configuration; only the ones
relevant to the chosen objective are read.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_is_fitted, validate_data

from .harness import evaluate, train_epoch, _make_optimizer
from .models import LabeledBatch, MlpModel, mlp_forward
from .numerics import KEY_MODEL_INIT, substream
from .objectives import KINDS, ObjectiveSpec


class AscentDescentClassifier(ClassifierMixin, BaseEstimator):
    """Feedforward classifier trained under a threshold-based objective.

    Parameters
    ----------
    objective : one of {"erm", "flood", "iflood", "softad", "sam",
        "fdgr", "gr-exact"}.  Each reads only its own hyperparameters:
        theta (and sigma for "softad") for the threshold family, radius
        for "sam", lam (and fd_step for "fdgr") for the regularized pair.
    hidden : tuple of hidden-layer widths; () gives a linear model.
    epochs, batch_size, optimizer, learning_rate, momentum : training
        loop settings.  batch_size is clamped to the sample count.
    random_state : integer seed driving init and epoch shuffles; two
        fits with equal settings produce identical models.
    """

    def __init__(self, objective="softad", theta=0.1, sigma=1.0, radius=0.05,
                 lam=0.1, fd_step=0.01, hidden=(64, 64), loss="cross-entropy",
                 optimizer="adam", learning_rate=0.001, momentum=0.0,
                 epochs=200, batch_size=50, random_state=0):
        self.objective = objective
        self.theta = theta
        self.sigma = sigma
        self.radius = radius
        self.lam = lam
        self.fd_step = fd_step
        self.hidden = hidden
        self.loss = loss
        self.optimizer = optimizer
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.epochs = epochs
        self.batch_size = batch_size
        self.random_state = random_state

    def _objective_spec(self) -> ObjectiveSpec:
        kind = self.objective
        if kind == "erm":
            return ObjectiveSpec.erm()
        if kind == "flood":
            return ObjectiveSpec.flood(self.theta)
        if kind == "iflood":
            return ObjectiveSpec.iflood(self.theta)
        if kind == "softad":
            return ObjectiveSpec.softad(self.theta, self.sigma)
        if kind == "sam":
            return ObjectiveSpec.sam(self.radius)
        if kind == "fdgr":
            return ObjectiveSpec.fdgr(self.lam, self.fd_step)
        if kind == "gr-exact":
            return ObjectiveSpec.gr_exact(self.lam)
        raise ValueError(f"objective must be one of {KINDS}, got {kind!r}")

    def fit(self, X, y):
        X, y = validate_data(self, X, y, dtype=np.float64)
        check_classification_targets(y)
        spec = self._objective_spec()
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        self.classes_, encoded = np.unique(y, return_inverse=True)
        if self.classes_.size < 2:
            raise ValueError("classifier needs more than 1 class in y")
        seed = 0 if self.random_state is None else int(self.random_state)
        batch = LabeledBatch(X, encoded.astype(np.int64))
        dims = (X.shape[1], *self.hidden, self.classes_.size)
        model = MlpModel.initialize(dims, substream(seed, KEY_MODEL_INIT))
        state, step = _make_optimizer(self)
        batch_size = min(int(self.batch_size), len(batch))
        if batch_size < 1:
            raise ValueError("batch size must be >= 1")
        w = model.flatten()
        curve = []
        diverged = False
        for epoch in range(1, self.epochs + 1):
            w, diverged = train_epoch(
                model, w, batch, spec, self.loss, state, step, batch_size, seed, epoch
            )
            if diverged:
                break
            with np.errstate(over="ignore", invalid="ignore"):
                epoch_loss, _ = evaluate(model, batch, self.loss)
            if not np.isfinite(epoch_loss):
                diverged = True
                break
            curve.append(epoch_loss)
        self.model_ = model
        self.loss_curve_ = np.array(curve)
        self.n_iter_ = len(curve)
        self.diverged_ = diverged
        return self

    def decision_logits(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        X = validate_data(self, X, dtype=np.float64, reset=False)
        return mlp_forward(self.model_, X)

    def predict(self, X):
        logits = self.decision_logits(X)
        return self.classes_[np.argmax(logits, axis=1)]

    def predict_proba(self, X) -> np.ndarray:
        logits = self.decision_logits(X)
        shifted = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)
