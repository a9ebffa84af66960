"""Masked MLP trainer in float64 numpy.

Layer order: every layer except the last is linear -> BatchNorm -> ReLU; the
last layer is linear only. Masked layers apply a fixed boolean mask to a
dense weight matrix, and masked gradients are zeroed so forbidden weights stay
exactly zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .generators import make_rng
from .translate import NetworkSpec

BN_EPS = 1e-5
BN_MOMENTUM = 0.1
SGD_MOMENTUM = 0.9


class TrainingError(RuntimeError):
    pass


class NonFiniteLoss(TrainingError):
    def __init__(self, message, batch_index=None):
        super().__init__(message)
        self.batch_index = batch_index


class TrainingDiverged(TrainingError):
    def __init__(self, message, record):
        super().__init__(message)
        self.record = record


@dataclass
class MaskedMlp:
    spec: NetworkSpec
    weights: list[np.ndarray]
    masks: list[np.ndarray | None]
    gamma: list[np.ndarray]
    beta: list[np.ndarray]
    running_mean: list[np.ndarray]
    running_var: list[np.ndarray]
    normalization: bool = True

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    def copy(self) -> "MaskedMlp":
        cp = lambda xs: [x.copy() if x is not None else None for x in xs]  # noqa: E731
        return MaskedMlp(
            self.spec,
            cp(self.weights),
            self.masks,
            cp(self.gamma),
            cp(self.beta),
            cp(self.running_mean),
            cp(self.running_var),
            self.normalization,
        )

    def masks_hold(self) -> bool:
        return all(m is None or not np.any(w[~m]) for w, m in zip(self.weights, self.masks))

    def params(self) -> dict[str, list[np.ndarray]]:
        return {"W": self.weights, "gamma": self.gamma, "beta": self.beta}


def init(spec: NetworkSpec, seed: int = 0, masked: bool = True, normalization: bool = True) -> MaskedMlp:
    """Kaiming-uniform init over each row's allowed entries; masked entries are zero.

    ``masked=False`` builds the plain dense network with the same weights
    (useful as a reference for the complete graph).
    """
    rng = make_rng(seed)
    widths = spec.widths
    weights, masks = [], []
    for layer in range(spec.layers.num_layers):
        fan_in, fan_out = widths[layer], widths[layer + 1]
        mask = spec.mask(layer)
        allowed = mask.sum(axis=1) if mask is not None else np.full(fan_out, fan_in)
        bound = np.sqrt(6.0 / np.maximum(allowed, 1))[:, None]
        w = rng.uniform(-1.0, 1.0, size=(fan_out, fan_in)) * bound
        if mask is not None:
            w = np.where(mask, w, 0.0)
        weights.append(w)
        masks.append(mask if masked else None)
    hidden = [widths[layer + 1] for layer in range(spec.layers.num_layers - 1)]
    return MaskedMlp(
        spec=spec,
        weights=weights,
        masks=masks,
        gamma=[np.ones(h) for h in hidden],
        beta=[np.zeros(h) for h in hidden],
        running_mean=[np.zeros(h) for h in hidden],
        running_var=[np.ones(h) for h in hidden],
        normalization=normalization,
    )


def _check_input(model: MaskedMlp, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.spec.widths[0]:
        raise ValueError(f"input shape {x.shape} does not match input width {model.spec.widths[0]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("input contains non-finite values")
    return x


def _forward(model: MaskedMlp, x: np.ndarray, train: bool):
    caches = []
    h = x
    last = model.num_layers - 1
    for layer, w in enumerate(model.weights):
        z = h @ w.T
        if layer == last:
            caches.append((h, None))
            return z, caches
        if model.normalization:
            if train:
                mu = z.mean(axis=0)
                var = z.var(axis=0)
                m = z.shape[0]
                model.running_mean[layer] = (1 - BN_MOMENTUM) * model.running_mean[layer] + BN_MOMENTUM * mu
                unbiased = var * m / (m - 1) if m > 1 else var
                model.running_var[layer] = (1 - BN_MOMENTUM) * model.running_var[layer] + BN_MOMENTUM * unbiased
            else:
                mu, var = model.running_mean[layer], model.running_var[layer]
            inv_std = 1.0 / np.sqrt(var + BN_EPS)
            xhat = (z - mu) * inv_std
            y = model.gamma[layer] * xhat + model.beta[layer]
        else:
            xhat = inv_std = None
            y = z
        out = np.maximum(y, 0.0)
        caches.append((h, (xhat, inv_std, y)))
        h = out
    raise AssertionError("unreachable")


def forward(model: MaskedMlp, batch, mode: str = "eval") -> np.ndarray:
    """Logits for a batch; ``mode="train"`` uses batch statistics and updates running stats."""
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = _check_input(model, batch)
    logits, _ = _forward(model, x, mode == "train")
    return logits


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_z
    n = logits.shape[0]
    loss = -log_p[np.arange(n), labels].mean()
    dlogits = np.exp(log_p)
    dlogits[np.arange(n), labels] -= 1.0
    return float(loss), dlogits / n


def loss_and_backward(model: MaskedMlp, batch, labels, batch_index: int | None = None):
    """Mean softmax cross-entropy (train-mode forward) and gradients per parameter group."""
    x = _check_input(model, batch)
    labels = np.asarray(labels, dtype=np.int64)
    classes = model.spec.widths[-1]
    if labels.min() < 0 or labels.max() >= classes:
        raise ValueError(f"labels must lie in [0, {classes})")
    logits, caches = _forward(model, x, train=True)
    loss, grad = softmax_cross_entropy(logits, labels)
    if not math.isfinite(loss):
        raise NonFiniteLoss(f"non-finite loss {loss} at batch {batch_index}", batch_index)
    n_hidden = model.num_layers - 1
    grads = {
        "W": [None] * model.num_layers,
        "gamma": [None] * n_hidden,
        "beta": [None] * n_hidden,
    }
    for layer in range(model.num_layers - 1, -1, -1):
        h, bn = caches[layer]
        if bn is not None:
            xhat, inv_std, y = bn
            grad = grad * (y > 0)
            if model.normalization:
                grads["gamma"][layer] = (grad * xhat).sum(axis=0)
                grads["beta"][layer] = grad.sum(axis=0)
                dxhat = grad * model.gamma[layer]
                m = grad.shape[0]
                grad = inv_std / m * (m * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
            else:
                grads["gamma"][layer] = np.zeros_like(model.gamma[layer])
                grads["beta"][layer] = np.zeros_like(model.beta[layer])
        dw = grad.T @ h
        mask = model.masks[layer]
        if mask is not None:
            dw = np.where(mask, dw, 0.0)
        grads["W"][layer] = dw
        grad = grad @ model.weights[layer]
    return loss, grads


def cosine_lr(t: int, total: int, lr0: float) -> float:
    if not 0 <= t <= total:
        raise ValueError(f"step {t} outside [0, {total}]")
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * t / total))


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 128
    initial_lr: float = 0.1
    seed: int = 0
    normalization: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.normalization and self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 with BatchNorm")


@dataclass
class Dataset:
    x_train: np.ndarray
    y_train: np.ndarray
    x_val: np.ndarray
    y_val: np.ndarray
    classes: int

    @property
    def input_dim(self) -> int:
        return self.x_train.shape[1]


class SGD:
    """Momentum SGD (v <- mu*v + g; p <- p - lr*v), no weight decay."""

    def __init__(self, model: MaskedMlp, momentum: float = SGD_MOMENTUM):
        self.momentum = momentum
        self.velocity = {k: [np.zeros_like(p) for p in ps] for k, ps in model.params().items()}

    def step(self, model: MaskedMlp, grads, lr: float):
        for key, params in model.params().items():
            for i, p in enumerate(params):
                v = self.velocity[key][i]
                v *= self.momentum
                v += grads[key][i]
                p -= lr * v


def evaluate(model: MaskedMlp, x, y) -> float:
    """Top-1 error fraction in eval mode."""
    y = np.asarray(y)
    if len(y) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    pred = forward(model, x, "eval").argmax(axis=1)
    return float(np.mean(pred != y))


def run_epochs(model: MaskedMlp, dataset: Dataset, config: TrainConfig, on_step=None):
    """Train ``model`` in place, yielding the epoch index after each epoch.

    ``on_step(step, loss, model)`` is called after every parameter update.
    """
    n = len(dataset.y_train)
    per_epoch = n // config.batch_size
    if per_epoch == 0:
        raise TrainingError(f"training set of {n} samples smaller than batch size {config.batch_size}")
    total = config.epochs * per_epoch
    rng = make_rng(config.seed, 1)
    opt = SGD(model)
    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for b in range(per_epoch):
            idx = order[b * config.batch_size : (b + 1) * config.batch_size]
            loss, grads = loss_and_backward(model, dataset.x_train[idx], dataset.y_train[idx], batch_index=step)
            opt.step(model, grads, cosine_lr(step, total, config.initial_lr))
            step += 1
            if on_step is not None:
                on_step(step, loss, model)
        yield epoch


def train(model: MaskedMlp, dataset: Dataset, config: TrainConfig, graph_id: str = "", measures=None, width=None, flops=None):
    """Train in place; returns ``(model, ExperimentRecord)`` with per-epoch held-out errors."""
    from .analyze import ExperimentRecord

    model.normalization = config.normalization
    record = ExperimentRecord(
        graph_id=graph_id,
        measures=measures,
        width=width,
        flops=flops,
        seed=config.seed,
        final_error=None,
        curve=[],
    )
    try:
        for _ in run_epochs(model, dataset, config):
            record.curve.append(evaluate(model, dataset.x_val, dataset.y_val))
            if not model.masks_hold():
                raise TrainingError("masked weights became nonzero")
    except NonFiniteLoss as exc:
        record.status = "diverged"
        raise TrainingDiverged(str(exc), record) from exc
    record.final_error = record.curve[-1]
    return model, record


# --- persistence -------------------------------------------------------------


def save_weights(model: MaskedMlp, path) -> None:
    import json

    arrays = {}
    for i, w in enumerate(model.weights):
        arrays[f"W{i}"] = w
    for i in range(len(model.gamma)):
        arrays[f"gamma{i}"] = model.gamma[i]
        arrays[f"beta{i}"] = model.beta[i]
        arrays[f"running_mean{i}"] = model.running_mean[i]
        arrays[f"running_var{i}"] = model.running_var[i]
    arrays["spec_json"] = np.frombuffer(json.dumps(model.spec.to_dict()).encode(), dtype=np.uint8)
    arrays["normalization"] = np.array(model.normalization)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_weights(path) -> MaskedMlp:
    import json

    from .translate import spec_from_dict

    with np.load(path) as data:
        spec = spec_from_dict(json.loads(bytes(data["spec_json"]).decode()))
        n_layers = spec.layers.num_layers
        model = init(spec, 0, normalization=bool(data["normalization"]))
        model.weights = [data[f"W{i}"].copy() for i in range(n_layers)]
        for i in range(n_layers - 1):
            model.gamma[i] = data[f"gamma{i}"].copy()
            model.beta[i] = data[f"beta{i}"].copy()
            model.running_mean[i] = data[f"running_mean{i}"].copy()
            model.running_var[i] = data[f"running_var{i}"].copy()
    return model
