"""Training loop, losses, metrics and the model comparison report."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff import NumericError, adam_step, backward, cosine_lr, forward
from .data import Dataset, batches
from .fuzzify import DiffModel

P_MIN = 1e-12


def bce_loss(pred, label, epsilon: float = 0.0):
    """Mean binary cross-entropy against the smoothed target ``y(1-2e)+e``."""
    if not 0 <= epsilon < 0.5:
        raise ValueError(f"epsilon must be in [0, 0.5), got {epsilon}")
    p = np.clip(np.asarray(pred, dtype=float), P_MIN, 1 - P_MIN)
    t = np.asarray(label, dtype=float) * (1 - 2 * epsilon) + epsilon
    return float(np.mean(-(t * np.log(p) + (1 - t) * np.log(1 - p))))


def bce_grad(pred, label, epsilon: float = 0.0) -> np.ndarray:
    p = np.clip(np.asarray(pred, dtype=float), P_MIN, 1 - P_MIN)
    t = np.asarray(label, dtype=float) * (1 - 2 * epsilon) + epsilon
    return (-t / p + (1 - t) / (1 - p)) / p.size


def _smoothed_onehot(label, k: int, epsilon: float) -> np.ndarray:
    label = np.atleast_1d(np.asarray(label))
    if np.any((label < 0) | (label >= k)):
        bad = label[(label < 0) | (label >= k)][0]
        raise IndexError(f"class index {bad} out of range for {k} classes")
    t = np.full((label.size, k), epsilon / k)
    t[np.arange(label.size), label] += 1 - epsilon
    return t


def cce_loss(probs, class_index, epsilon: float = 0.0):
    """Mean categorical cross-entropy against a smoothed one-hot target."""
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    t = _smoothed_onehot(class_index, probs.shape[-1], epsilon)
    return float(np.mean(-np.sum(t * np.log(np.maximum(probs, 1e-300)), axis=-1)))


def cce_grad(probs, class_index, epsilon: float = 0.0) -> np.ndarray:
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    t = _smoothed_onehot(class_index, probs.shape[-1], epsilon)
    return -t / np.maximum(probs, 1e-300) / probs.shape[0]


def decisions(model: DiffModel, out: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    if model.head == "binary":
        return (out > threshold).astype(int)
    return np.argmax(out, axis=-1)


@dataclass
class Encoded:
    inputs: dict
    labels: np.ndarray
    strata: list

    def __len__(self):
        return self.labels.size

    def take(self, idx) -> dict:
        return {k: v[idx] for k, v in self.inputs.items()}


def encode(model: DiffModel, dataset: Dataset) -> Encoded:
    return Encoded(model.encoder.encode(dataset.records), dataset.labels, dataset.strata)


def _as_encoded(model, data) -> Encoded:
    return data if isinstance(data, Encoded) else encode(model, data)


def accuracy(model: DiffModel, data, threshold: float = 0.5) -> float:
    enc = _as_encoded(model, data)
    if len(enc) == 0:
        raise ValueError("accuracy of an empty dataset is undefined")
    return float(np.mean(decisions(model, model.forward_encoded(enc.inputs), threshold) == enc.labels))


def stratum_accuracy(model: DiffModel, data) -> dict[str, float]:
    enc = _as_encoded(model, data)
    if len(enc) == 0:
        raise ValueError("accuracy of an empty dataset is undefined")
    hit = decisions(model, model.forward_encoded(enc.inputs)) == enc.labels
    out = {}
    strata = np.asarray(enc.strata)
    for s in sorted(set(enc.strata)):
        out[s] = float(np.mean(hit[strata == s]))
    return out


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 100
    lr: float = 0.01
    epsilon: float = 0.0
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not 0 <= self.epsilon < 0.5:
            raise ValueError(f"epsilon must be in [0, 0.5), got {self.epsilon}")


@dataclass
class TrainReport:
    history: list[float]
    loss_history: list[float]
    final_accuracy: float
    param_count: int
    seconds: float
    config: dict
    seed: int
    name: str = ""
    clamp_ok: bool = True

    def to_json(self, timing: bool = False) -> dict:
        doc = asdict(self)
        if not timing:
            doc.pop("seconds")
        return doc


def _loss_and_grad(model, out, labels, eps):
    if model.head == "binary":
        return bce_loss(out, labels, eps), bce_grad(out, labels, eps)
    return cce_loss(out, labels, eps), cce_grad(out, labels, eps)


def boundaries_inside(model: DiffModel) -> bool:
    """Every threshold weight lies in [0, 1], so its boundary lies in [min, max]."""
    for i, (lo, hi) in model.params.bounds.items():
        if not lo <= model.params.values[i] <= hi:
            return False
    return True


def train(model: DiffModel, train_set, val_set, config: TrainConfig | None = None,
          name: str = "") -> TrainReport:
    """Adam with per-step cosine decay; bounded weights are clamped after each step."""
    config = config or TrainConfig()
    t0 = time.perf_counter()
    tr, va = _as_encoded(model, train_set), _as_encoded(model, val_set)
    if len(tr) == 0 or len(va) == 0:
        raise ValueError("training and validation sets must be non-empty")
    if model.head == "binary" and not set(np.unique(tr.labels)) <= {0, 1}:
        raise ValueError("binary model needs 0/1 labels")
    n_batches = -(-len(tr) // config.batch_size)
    total = config.epochs * n_batches
    trainable = len(model.params) > 0
    store = model.params
    step = 0
    history, losses = [], []
    for epoch in range(config.epochs):
        epoch_loss, seen = 0.0, 0
        for b, idx in enumerate(batches(len(tr), config.batch_size, config.seed * 100_003 + epoch)):
            inputs = tr.take(idx)
            labels = tr.labels[idx]
            if trainable:
                vals = forward(model.graph, inputs, store, upto=model.output)
                loss, seed = _loss_and_grad(model, vals[model.output], labels, config.epsilon)
                if not np.isfinite(loss):
                    raise NumericError(f"non-finite loss at epoch {epoch + 1}, batch {b + 1}")
                grads = backward(model.graph, vals, store, model.output, seed)
                if not np.all(np.isfinite(grads)):
                    raise NumericError(f"non-finite gradient at epoch {epoch + 1}, batch {b + 1}")
                store.values = adam_step(store.values, grads, store.adam, cosine_lr(step, total, config.lr),
                                         config.beta1, config.beta2)
                store.clamp()
            else:
                out = model.forward_encoded(inputs)
                loss = _loss_and_grad(model, out, labels, config.epsilon)[0]
            step += 1
            epoch_loss += loss * len(idx)
            seen += len(idx)
        losses.append(epoch_loss / seen)
        history.append(accuracy(model, va))
    return TrainReport(history, losses, history[-1], len(store), time.perf_counter() - t0,
                       asdict(config), config.seed, name, boundaries_inside(model))
