"""VGG-style convolutional classifier written directly in numpy.

Layout is NHWC throughout. Every 3x3 same-padded convolution is followed by
batch normalization and ELU; each block ends in a 2x2 max pool. The head is
one or more dense ELU layers with dropout, then a 2-way softmax.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .classifiers import TrainingDivergedError
from .imaging import GreyImage

DESK_BLOCKS = ((2, 16), (2, 32), (2, 64), (2, 128))


def elu(x, gamma: float = 1.0):
    """x for x >= 0, gamma * (exp(x) - 1) below zero. Works on scalars and arrays."""
    if gamma <= 0:
        raise ValueError("ELU gamma must be positive")
    x = np.asarray(x, dtype=np.float64) if np.isscalar(x) else x
    out = np.where(x >= 0, x, gamma * np.expm1(np.minimum(x, 0)))
    return float(out) if np.ndim(out) == 0 else out


def lr_at_step(lr0: float, step: int, rate: float = 0.95, every: int = 1000) -> float:
    """Stepped exponential decay: ``lr0 * rate ** floor(step / every)``."""
    if lr0 <= 0:
        raise ValueError("initial learning rate must be positive")
    if step < 0:
        raise ValueError("global step must be >= 0")
    return lr0 * rate ** (step // every)


@dataclass(frozen=True)
class CnnConfig:
    side: int = 64
    blocks: tuple[tuple[int, int], ...] = DESK_BLOCKS  # (conv count, channels) per block
    fc: tuple[int, ...] = (64,)
    gamma: float = 1.0
    dropout: float = 0.5
    batch_size: int = 32
    learning_rate: float = 0.001
    decay_rate: float = 0.95
    decay_steps: int = 1000
    patience: int = 3
    epochs: int = 30
    bn_momentum: float = 0.9
    bn_eps: float = 1e-5
    rho: float = 0.9
    eps: float = 1e-8
    dtype: str = "float32"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(tuple(int(v) for v in b) for b in self.blocks))
        object.__setattr__(self, "fc", tuple(int(v) for v in self.fc))
        if not self.blocks:
            raise ValueError("need at least one convolution block")
        if self.side % (2 ** len(self.blocks)):
            raise ValueError(f"side {self.side} is not divisible by 2**{len(self.blocks)}")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")
        if self.gamma <= 0 or self.learning_rate <= 0:
            raise ValueError("gamma and learning rate must be positive")
        if self.patience < 1 or self.batch_size < 1:
            raise ValueError("patience and batch size must be >= 1")

    @property
    def final_side(self) -> int:
        return self.side // 2 ** len(self.blocks)


# ---------------------------------------------------------------------- layers


class Layer:
    params: dict
    grads: dict

    def __init__(self):
        self.params, self.grads = {}, {}

    def buffers(self) -> dict:
        return {}


class Conv3x3(Layer):
    def __init__(self, cin, cout, rng, dtype):
        super().__init__()
        bound = math.sqrt(6.0 / (cin * 9))
        self.params = {
            "W": rng.uniform(-bound, bound, (cin, 3, 3, cout)).astype(dtype),
            "b": np.zeros(cout, dtype=dtype),
        }

    def forward(self, x, train):
        n, h, w, c = x.shape
        xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
        cols = sliding_window_view(xp, (3, 3), axis=(1, 2)).reshape(n * h * w, c * 9)
        Wm = self.params["W"].reshape(c * 9, -1)
        self._cache = (cols, x.shape)
        return (cols @ Wm + self.params["b"]).reshape(n, h, w, -1)

    def backward(self, dout):
        cols, (n, h, w, c) = self._cache
        W = self.params["W"]
        d2 = dout.reshape(-1, W.shape[-1])
        self.grads["W"] = (cols.T @ d2).reshape(W.shape)
        self.grads["b"] = d2.sum(axis=0)
        dcols = (d2 @ W.reshape(c * 9, -1).T).reshape(n, h, w, c, 3, 3)
        dxp = np.zeros((n, h + 2, w + 2, c), dtype=dout.dtype)
        for i in range(3):
            for j in range(3):
                dxp[:, i : i + h, j : j + w, :] += dcols[..., i, j]
        self._cache = None
        return dxp[:, 1:-1, 1:-1, :]


class BatchNorm(Layer):
    def __init__(self, channels, momentum, eps, dtype):
        super().__init__()
        self.params = {"gamma": np.ones(channels, dtype=dtype), "beta": np.zeros(channels, dtype=dtype)}
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.momentum, self.eps = momentum, eps
        self.last_normalized = None

    def buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def forward(self, x, train):
        if train:
            axes = tuple(range(x.ndim - 1))
            mu = x.mean(axis=axes)
            var = x.var(axis=axes)
            m = self.momentum
            self.running_mean[...] = m * self.running_mean + (1 - m) * mu
            self.running_var[...] = m * self.running_var + (1 - m) * var
        else:
            mu, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mu) * inv_std
        self.last_normalized = xhat
        self._cache = (xhat, inv_std)
        return self.params["gamma"] * xhat + self.params["beta"]

    def backward(self, dout):
        xhat, inv_std = self._cache
        axes = tuple(range(dout.ndim - 1))
        count = dout.size // dout.shape[-1]
        self.grads["gamma"] = (dout * xhat).sum(axis=axes)
        self.grads["beta"] = dout.sum(axis=axes)
        dxhat = dout * self.params["gamma"]
        dx = (inv_std / count) * (
            count * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes)
        )
        self._cache = None
        return dx.astype(dout.dtype, copy=False)


class Elu(Layer):
    def __init__(self, gamma):
        super().__init__()
        self.gamma = gamma

    def forward(self, x, train):
        neg = self.gamma * np.expm1(np.minimum(x, 0))
        self._cache = (x >= 0, neg)
        return np.where(x >= 0, x, neg)

    def backward(self, dout):
        pos, neg = self._cache
        self._cache = None
        return dout * np.where(pos, 1, neg + self.gamma).astype(dout.dtype, copy=False)


class MaxPool2(Layer):
    def forward(self, x, train):
        n, h, w, c = x.shape
        xr = x.reshape(n, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 5, 2, 4).reshape(n, h // 2, w // 2, c, 4)
        idx = xr.argmax(axis=-1)[..., None]
        self._cache = (idx, x.shape)
        return np.take_along_axis(xr, idx, axis=-1)[..., 0]

    def backward(self, dout):
        idx, (n, h, w, c) = self._cache
        dxr = np.zeros((n, h // 2, w // 2, c, 4), dtype=dout.dtype)
        np.put_along_axis(dxr, idx, dout[..., None], axis=-1)
        self._cache = None
        return dxr.reshape(n, h // 2, w // 2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(n, h, w, c)


class Flatten(Layer):
    def forward(self, x, train):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._shape)


class Dense(Layer):
    def __init__(self, fan_in, fan_out, rng, dtype, he=True):
        super().__init__()
        bound = math.sqrt(6.0 / fan_in) if he else math.sqrt(6.0 / (fan_in + fan_out))
        self.params = {
            "W": rng.uniform(-bound, bound, (fan_in, fan_out)).astype(dtype),
            "b": np.zeros(fan_out, dtype=dtype),
        }

    def forward(self, x, train):
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dout):
        self.grads["W"] = self._x.T @ dout
        self.grads["b"] = dout.sum(axis=0)
        self._x = None
        return dout @ self.params["W"].T


class Dropout(Layer):
    """Inverted dropout: kept units are scaled by 1/(1-p) during training."""

    def __init__(self, p, rng):
        super().__init__()
        self.p, self.rng = p, rng

    def forward(self, x, train):
        if not train or self.p == 0:
            self._mask = None
            return x
        self._mask = (self.rng.random(x.shape) >= self.p).astype(x.dtype) / x.dtype.type(1 - self.p)
        return x * self._mask

    def backward(self, dout):
        return dout if self._mask is None else dout * self._mask


# ----------------------------------------------------------------------- model


@dataclass
class CnnModel:
    config: CnnConfig
    layers: list = field(default_factory=list)

    @classmethod
    def build(cls, cfg: CnnConfig) -> "CnnModel":
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))
        drop_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
        dt = np.dtype(cfg.dtype)
        layers, cin = [], 1
        for n_conv, ch in cfg.blocks:
            for _ in range(n_conv):
                layers += [Conv3x3(cin, ch, rng, dt), BatchNorm(ch, cfg.bn_momentum, cfg.bn_eps, dt), Elu(cfg.gamma)]
                cin = ch
            layers.append(MaxPool2())
        layers.append(Flatten())
        width = cin * cfg.final_side**2
        for units in cfg.fc:
            layers += [Dense(width, units, rng, dt), Elu(cfg.gamma), Dropout(cfg.dropout, drop_rng)]
            width = units
        layers.append(Dense(width, 2, rng, dt, he=False))
        return cls(cfg, layers)

    def named_params(self):
        for i, layer in enumerate(self.layers):
            for k, v in layer.params.items():
                yield f"{i}.{k}", layer, k, v

    def state(self) -> dict:
        out = {}
        for i, layer in enumerate(self.layers):
            for k, v in {**layer.params, **layer.buffers()}.items():
                out[f"{i}.{k}"] = v.copy()
        return out

    def load_state(self, state: dict) -> None:
        for i, layer in enumerate(self.layers):
            for k, v in layer.params.items():
                v[...] = state[f"{i}.{k}"]
            for k, v in layer.buffers().items():
                v[...] = state[f"{i}.{k}"]

    def forward(self, x, train: bool):
        for layer in self.layers:
            x = layer.forward(x, train)
        return x

    def backward(self, dlogits):
        d = dlogits
        for layer in reversed(self.layers):
            d = layer.backward(d)
        return d


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _as_batch(images, cfg: CnnConfig) -> np.ndarray:
    if isinstance(images, GreyImage):
        arr = images.pixels[None]
    elif isinstance(images, (list, tuple)):
        arr = np.stack([im.pixels if isinstance(im, GreyImage) else np.asarray(im) for im in images])
    else:
        arr = np.asarray(images)
        if arr.ndim == 2:
            arr = arr[None]
    if arr.ndim == 4 and arr.shape[-1] == 1:
        arr = arr[..., 0]
    if arr.shape[1:] != (cfg.side, cfg.side):
        raise ValueError(f"model expects {cfg.side}x{cfg.side} images, got {arr.shape[1:]}")
    scale = 255.0 if arr.dtype == np.uint8 else 1.0
    return (arr.astype(cfg.dtype) / np.dtype(cfg.dtype).type(scale))[..., None]


def cross_entropy(probs, y) -> float:
    n = len(y)
    return float(-np.mean(np.log(np.clip(probs[np.arange(n), y].astype(np.float64), 1e-12, None))))


def loss_and_grads(model: CnnModel, x, y):
    """Training-mode forward and backward on one batch; returns the mean loss."""
    logits = model.forward(x, train=True)
    probs = _softmax(logits)
    loss = cross_entropy(probs, y)
    d = probs.copy()
    d[np.arange(len(y)), y] -= 1
    model.backward((d / len(y)).astype(logits.dtype, copy=False))
    return loss


def cnn_predict_proba(model: CnnModel, images, batch_size: int = 64) -> np.ndarray:
    """TCFA probability per image, inference mode (running statistics, no dropout)."""
    x = _as_batch(images, model.config)
    out = []
    for s in range(0, len(x), batch_size):
        out.append(_softmax(model.forward(x[s : s + batch_size], train=False).astype(np.float64))[:, 1])
    return np.concatenate(out) if out else np.zeros(0)


# -------------------------------------------------------------------- training


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_acc: float
    lr: float


@dataclass
class TrainLog:
    epochs: list[EpochRecord] = field(default_factory=list)
    stop_reason: str = "BUDGET"
    best_epoch: int = 0

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("epoch,train_loss,val_loss,val_acc,lr\n")
            for r in self.epochs:
                fh.write(f"{r.epoch},{r.train_loss!r},{r.val_loss!r},{r.val_acc!r},{r.lr!r}\n")


class EarlyStopping:
    """Stop once the monitored loss has not improved for ``patience`` epochs."""

    def __init__(self, patience: int = 3):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = 0
        self.wait = 0

    def update(self, epoch: int, loss: float) -> bool:
        """Record one epoch; returns True when that epoch is a new best."""
        if loss < self.best:
            self.best, self.best_epoch, self.wait = loss, epoch, 0
            return True
        self.wait += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.wait >= self.patience


def _unpack(data, cfg):
    if isinstance(data, tuple) and len(data) == 2:
        images, labels = data
    else:
        images = [s.image for s in data]
        labels = [int(s.label) for s in data]
    return _as_batch(images, cfg), np.asarray(labels, dtype=np.int64)


def cnn_train(train, validation, cfg: CnnConfig = CnnConfig(), log_fn=None):
    """Train with RMSprop on the stepped schedule; keep the best-validation weights.

    ``train`` and ``validation`` are lists of :class:`LabeledSample` or
    ``(images, labels)`` pairs. Returns ``(model, TrainLog)``.
    """
    xt, yt = _unpack(train, cfg)
    xv, yv = _unpack(validation, cfg)
    if len(yt) == 0 or len(yv) == 0:
        raise ValueError("training and validation sets must be non-empty")
    model = CnnModel.build(cfg)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2]))
    params = [(layer, k) for _, layer, k, _ in model.named_params()]
    cache = {(id(layer), k): np.zeros_like(layer.params[k]) for layer, k in params}
    dt = np.dtype(cfg.dtype).type
    rho, one_minus = dt(cfg.rho), dt(1 - cfg.rho)
    stopper = EarlyStopping(cfg.patience)
    log = TrainLog()
    best_state = model.state()
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(yt))
        total = 0.0
        for s in range(0, len(order), cfg.batch_size):
            idx = order[s : s + cfg.batch_size]
            loss = loss_and_grads(model, xt[idx], yt[idx])
            if not math.isfinite(loss):
                raise TrainingDivergedError(f"CNN loss became {loss} at epoch {epoch}, step {step}")
            total += loss * len(idx)
            lr = dt(lr_at_step(cfg.learning_rate, step, cfg.decay_rate, cfg.decay_steps))
            for layer, k in params:
                g = layer.grads[k]
                c = cache[(id(layer), k)]
                c *= rho
                c += one_minus * g * g
                layer.params[k] -= lr * g / (np.sqrt(c) + dt(cfg.eps))
            step += 1
        pv = _softmax(np.concatenate([model.forward(xv[i : i + 64], train=False) for i in range(0, len(yv), 64)]).astype(np.float64))
        val_loss = cross_entropy(pv, yv)
        if not math.isfinite(val_loss):
            raise TrainingDivergedError(f"CNN validation loss became {val_loss} at epoch {epoch}")
        rec = EpochRecord(epoch, total / len(yt), val_loss, float(np.mean(pv.argmax(axis=1) == yv)),
                          lr_at_step(cfg.learning_rate, step, cfg.decay_rate, cfg.decay_steps))
        log.epochs.append(rec)
        if log_fn:
            log_fn(rec)
        if stopper.update(epoch, val_loss):
            best_state = model.state()
        if stopper.should_stop:
            log.stop_reason = "PATIENCE"
            break
    log.best_epoch = stopper.best_epoch
    model.load_state(best_state)
    return model, log


def clone(model: CnnModel) -> CnnModel:
    return copy.deepcopy(model)
