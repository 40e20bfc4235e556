"""Convex reference learner: multinomial logistic regression with L2.

The objective is

    f(W) = (1/n) * sum_i CE(softmax(W x_i + b), y_i) + (rho/2) * ||W||^2

which is convex and L-smooth, so it satisfies the hypotheses of the
convergence guarantee this artifact validates. Parameters travel as a flat
float64 vector of length ``C * (dim + 1)``; reshaped to ``(C, dim + 1)``,
row ``c`` holds class c's feature weights with the bias in the last column.
The regularizer covers the bias too (it keeps the objective strongly convex
in every coordinate; the bias shrinkage is negligible at rho = 1e-3).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ..errors import TrainingError
from .datasets import Dataset

RHO_DEFAULT = 1e-3

SCHEDULES = ("inv_sqrt", "constant")


@dataclass(frozen=True)
class SGDConfig:
    """Hyper-parameters for one local SGD run.

    ``steps=None`` means one pass over the shard (``ceil(n / batch_size)``
    steps). The ``inv_sqrt`` schedule is ``eta_t = eta0 / sqrt(t)`` with t
    counted from 1.
    """

    steps: int | None = None
    learning_rate: float = 0.5
    schedule: str = "inv_sqrt"
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.steps is not None and self.steps < 1:
            raise ValueError("steps must be >= 1 (or None for one epoch)")
        if not (np.isfinite(self.learning_rate) and self.learning_rate > 0):
            raise ValueError("learning_rate must be positive")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be unsigned")

    def step_size(self, t: int) -> float:
        """Learning rate for 1-based step t."""
        if self.schedule == "constant":
            return self.learning_rate
        return self.learning_rate / math.sqrt(t)

    def resolve_steps(self, n_samples: int) -> int:
        if self.steps is not None:
            return self.steps
        return max(1, math.ceil(n_samples / self.batch_size))


def n_params(dim: int, n_classes: int) -> int:
    return n_classes * (dim + 1)


def init_params(dim: int, n_classes: int) -> np.ndarray:
    """All-zero start: every class equally likely, loss = log C exactly."""
    return np.zeros(n_params(dim, n_classes))


def _unpack(params: np.ndarray, dim: int, n_classes: int) -> np.ndarray:
    params = np.asarray(params, dtype=np.float64)
    expected = n_params(dim, n_classes)
    if params.shape != (expected,):
        raise ValueError(
            f"params shape {params.shape}, expected ({expected},) for "
            f"dim={dim}, n_classes={n_classes}"
        )
    return params.reshape(n_classes, dim + 1)


def _logits(W: np.ndarray, features: np.ndarray) -> np.ndarray:
    return features @ W[:, :-1].T + W[:, -1]


def softmax_loss(
    params: np.ndarray,
    features: np.ndarray,
    labels: np.ndarray,
    n_classes: int,
    rho: float = RHO_DEFAULT,
) -> float:
    W = _unpack(params, features.shape[1], n_classes)
    logits = _logits(W, features)
    shift = logits.max(axis=1, keepdims=True)
    log_norm = shift[:, 0] + np.log(np.exp(logits - shift).sum(axis=1))
    picked = logits[np.arange(len(labels)), labels]
    ce = float(np.mean(log_norm - picked))
    return ce + 0.5 * rho * float(np.sum(W * W))


def softmax_grad(
    params: np.ndarray,
    features: np.ndarray,
    labels: np.ndarray,
    n_classes: int,
    rho: float = RHO_DEFAULT,
) -> np.ndarray:
    W = _unpack(params, features.shape[1], n_classes)
    logits = _logits(W, features)
    shift = logits.max(axis=1, keepdims=True)
    expd = np.exp(logits - shift)
    probs = expd / expd.sum(axis=1, keepdims=True)
    probs[np.arange(len(labels)), labels] -= 1.0
    probs /= len(labels)
    grad = np.empty_like(W)
    grad[:, :-1] = probs.T @ features
    grad[:, -1] = probs.sum(axis=0)
    grad += rho * W
    return grad.reshape(-1)


def sgd_path(
    initial: np.ndarray,
    loss_fn: Callable[[np.ndarray], float],
    grad_fn: Callable[[np.ndarray], np.ndarray],
    config: SGDConfig,
    steps: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Generic SGD driver: ``w <- w - eta_t * grad_fn(w)`` for t = 1..steps.

    ``trace[t-1]`` is ``loss_fn`` evaluated after step t. Divergence (a
    non-finite loss) raises :class:`TrainingError` carrying the step index.
    Pluggable ``grad_fn`` lets tests drive it with analytically solvable
    objectives.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    w = np.array(initial, dtype=np.float64)
    trace = np.empty(steps)
    for t in range(1, steps + 1):
        w = w - config.step_size(t) * grad_fn(w)
        f = loss_fn(w)
        if not np.isfinite(f):
            raise TrainingError(f"loss became {f} at step {t}", step=t)
        trace[t - 1] = f
    return w, trace


def _batch_stream(n: int, batch_size: int, rng: np.random.Generator) -> Iterator[np.ndarray]:
    """Permutation-walk minibatches: every sample appears once per epoch."""
    batch_size = min(batch_size, n)
    while True:
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            yield order[start : start + batch_size]


def _run_sgd(initial, shard, config, rho, collect_grad_norms):
    if shard.n_samples == 0:
        raise ValueError("shard is empty")
    steps = config.resolve_steps(shard.n_samples)
    rng = np.random.default_rng(config.seed)
    batches = _batch_stream(shard.n_samples, config.batch_size, rng)
    grad_norms = np.empty(steps) if collect_grad_norms else None
    counter = {"t": 0}

    def grad(w):
        idx = next(batches)
        g = softmax_grad(w, shard.features[idx], shard.labels[idx], shard.n_classes, rho)
        if grad_norms is not None:
            grad_norms[counter["t"]] = np.linalg.norm(g)
            counter["t"] += 1
        return g

    def loss(w):
        return softmax_loss(w, shard.features, shard.labels, shard.n_classes, rho)

    initial = np.asarray(initial, dtype=np.float64)
    _unpack(initial, shard.dim, shard.n_classes)  # dimension check
    params, trace = sgd_path(initial, loss, grad, config, steps)
    return params, trace, grad_norms


def local_sgd(
    initial: np.ndarray,
    shard: Dataset,
    config: SGDConfig,
    rho: float = RHO_DEFAULT,
) -> tuple[np.ndarray, np.ndarray]:
    """One device's local training pass.

    Returns the updated parameter vector and the per-step full-shard
    regularized loss trace.
    """
    params, trace, _ = _run_sgd(initial, shard, config, rho, collect_grad_norms=False)
    return params, trace


def sgd_with_diagnostics(
    initial: np.ndarray,
    shard: Dataset,
    config: SGDConfig,
    rho: float = RHO_DEFAULT,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Like :func:`local_sgd` but also returns per-step minibatch gradient
    norms (the observable behind the gradient bound B)."""
    params, trace, grad_norms = _run_sgd(initial, shard, config, rho, collect_grad_norms=True)
    return params, trace, grad_norms


def evaluate(
    params: np.ndarray,
    dataset: Dataset,
    rho: float = RHO_DEFAULT,
) -> tuple[float, float]:
    """(regularized loss, accuracy) of ``params`` on ``dataset``.

    Argmax ties resolve to the lowest class index.
    """
    W = _unpack(params, dataset.dim, dataset.n_classes)
    predictions = np.argmax(_logits(W, dataset.features), axis=1)
    accuracy = float(np.mean(predictions == dataset.labels))
    loss = softmax_loss(params, dataset.features, dataset.labels, dataset.n_classes, rho)
    return loss, accuracy


def smoothness_ratios(
    dataset: Dataset,
    seed: int,
    n_pairs: int = 64,
    scale: float = 1.0,
    rho: float = RHO_DEFAULT,
) -> np.ndarray:
    """Sampled gradient-Lipschitz ratios ||grad f(x) - grad f(y)|| / ||x - y||.

    Their supremum is the smoothness constant L; the max over a sample is the
    reported estimate.
    """
    rng = np.random.default_rng(seed)
    k = n_params(dataset.dim, dataset.n_classes)
    ratios = np.empty(n_pairs)
    for i in range(n_pairs):
        x = rng.standard_normal(k) * scale
        y = rng.standard_normal(k) * scale
        gx = softmax_grad(x, dataset.features, dataset.labels, dataset.n_classes, rho)
        gy = softmax_grad(y, dataset.features, dataset.labels, dataset.n_classes, rho)
        ratios[i] = np.linalg.norm(gx - gy) / np.linalg.norm(x - y)
    return ratios


class SoftmaxRegressor(BaseEstimator, ClassifierMixin):
    """Scikit-learn face of the reference learner.

    fit/predict/predict_proba/score plus ``get_params``/``set_params`` via
    the usual base classes; training is :func:`local_sgd` under the hood.
    """

    def __init__(
        self,
        steps: int | None = None,
        learning_rate: float = 0.5,
        schedule: str = "inv_sqrt",
        batch_size: int = 32,
        rho: float = RHO_DEFAULT,
        seed: int = 0,
    ):
        self.steps = steps
        self.learning_rate = learning_rate
        self.schedule = schedule
        self.batch_size = batch_size
        self.rho = rho
        self.seed = seed

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_, encoded = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("need at least two classes")
        dataset = Dataset(X, encoded, len(self.classes_))
        config = SGDConfig(
            steps=self.steps,
            learning_rate=self.learning_rate,
            schedule=self.schedule,
            batch_size=self.batch_size,
            seed=self.seed,
        )
        params, trace = local_sgd(
            init_params(dataset.dim, dataset.n_classes), dataset, config, self.rho
        )
        W = params.reshape(dataset.n_classes, dataset.dim + 1)
        self.coef_ = W[:, :-1].copy()
        self.intercept_ = W[:, -1].copy()
        self.params_ = params
        self.loss_trace_ = trace
        self.n_features_in_ = dataset.dim
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        return X @ self.coef_.T + self.intercept_

    def predict_proba(self, X):
        logits = self.decision_function(X)
        shift = logits.max(axis=1, keepdims=True)
        expd = np.exp(logits - shift)
        return expd / expd.sum(axis=1, keepdims=True)

    def predict(self, X):
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]
