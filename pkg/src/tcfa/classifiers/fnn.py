"""Fully connected ReLU network with a softmax head, trained by mini-batch RMSprop."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._common import TrainingDivergedError, as_xy, check_binary

DEFAULT_HIDDEN = (50, 100, 200, 80, 40)


@dataclass(frozen=True)
class FnnTrainConfig:
    hidden: tuple[int, ...] = DEFAULT_HIDDEN
    learning_rate: float = 0.001
    decay: float = 0.95  # multiplier applied to the learning rate after every epoch
    batch_size: int = 100
    epochs: int = 100
    alpha: float = 1e-4  # L2 strength
    rho: float = 0.9
    eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0 or self.decay <= 0:
            raise ValueError("learning rate and decay must be positive")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch size must be >= 1 and epochs >= 0")


@dataclass
class FnnModel:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    alpha: float = 1e-4
    history: list[float] = field(default_factory=list)

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def copy(self) -> "FnnModel":
        return FnnModel([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.alpha, list(self.history))


def init_fnn(sizes, rng, alpha: float = 1e-4) -> FnnModel:
    """Glorot-uniform weights and biases for the given layer widths."""
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, fan_out))
    return FnnModel(weights, biases, alpha)


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward(model: FnnModel, X: np.ndarray) -> list[np.ndarray]:
    acts = [X]
    for i, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = acts[-1] @ W + b
        acts.append(_softmax(z) if i == len(model.weights) - 1 else np.maximum(z, 0.0))
    return acts


def loss_and_grads(model: FnnModel, X: np.ndarray, y: np.ndarray):
    """Mean cross-entropy plus ``alpha/(2n) * sum(W**2)`` and its gradients."""
    n = X.shape[0]
    acts = forward(model, X)
    probs = acts[-1]
    picked = np.clip(probs[np.arange(n), y], 1e-300, None)
    loss = -np.mean(np.log(picked))
    loss += model.alpha / (2 * n) * sum(np.sum(W * W) for W in model.weights)

    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n
    gW = [None] * len(model.weights)
    gb = [None] * len(model.weights)
    for i in range(len(model.weights) - 1, -1, -1):
        gW[i] = acts[i].T @ delta + (model.alpha / n) * model.weights[i]
        gb[i] = delta.sum(axis=0)
        if i:
            delta = (delta @ model.weights[i].T) * (acts[i] > 0)
    return loss, gW, gb


def fnn_train(train, cfg: FnnTrainConfig = FnnTrainConfig(), seed: int = 0, labels=None) -> FnnModel:
    X, y = as_xy(train, labels)
    check_binary(y)
    rng = np.random.default_rng(seed)
    model = init_fnn([X.shape[1], *cfg.hidden, 2], rng, cfg.alpha)
    params = model.weights + model.biases
    cache = [np.zeros_like(p) for p in params]
    n = X.shape[0]
    lr = cfg.learning_rate
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, gW, gb = loss_and_grads(model, X[idx], y[idx])
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"FNN loss became {loss} at epoch {epoch}, batch starting {start} (lr={lr:.3g})"
                )
            total += loss * len(idx)
            for p, g, c in zip(params, gW + gb, cache):
                c *= cfg.rho
                c += (1.0 - cfg.rho) * g * g
                p -= lr * g / (np.sqrt(c) + cfg.eps)
        model.history.append(total / n)
        lr *= cfg.decay
    return model


def fnn_predict_proba(model: FnnModel, x) -> np.ndarray:
    """TCFA probability (softmax second component) for each row of ``x``."""
    X, _ = as_xy(x)
    if X.shape[1] != model.weights[0].shape[0]:
        raise ValueError(f"model expects {model.weights[0].shape[0]} features, got {X.shape[1]}")
    return forward(model, X)[-1][:, 1]
