"""Mini-batch SGD training, prediction and weight persistence."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from ..container import read_container, write_container
from ..errors import ConfigError
from ..imaging import ColorSpace, Image, resize
from .layers import softmax_cross_entropy
from .network import ModelWeights, Network, NetworkSpec, network_weights, set_dropout_seed

log = logging.getLogger(__name__)

WEIGHTS_MAGIC = b"NCNNWTS\x00"


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    l2: float = 1e-6
    learning_rate: float = 1e-6
    epochs: int = 1000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.l2 < 0 or self.learning_rate < 0 or self.epochs < 0:
            raise ConfigError("rates and epochs must be non-negative")


@dataclass
class EpochStats:
    epoch: int
    loss: float
    train_acc: float
    test_acc: float = float("nan")


def prepare_crop(img: Image, size: int, dtype=np.float32) -> np.ndarray:
    """Squash an RGB8 crop to size x size and scale channels to [0, 1]."""
    if img.color_space is not ColorSpace.RGB8:
        raise ValueError("crops must be RGB8")
    sq = resize(img, size, size)
    return (sq.pixels.astype(np.float64) / 255.0).astype(dtype)


def prepare_batch(crops: list[Image], size: int, dtype=np.float32) -> np.ndarray:
    return np.stack([prepare_crop(c, size, dtype) for c in crops])


def sgd_step(net: Network, lr: float, l2: float) -> None:
    """w <- w - lr * (dL/dw + 2 * l2 * w) for every parameter.

    Applied as a decay followed by the gradient step so that a zero data
    gradient shrinks each weight by exactly ``1 - 2 * lr * l2``.
    """
    for layer in net.layers:
        for key, p in layer.params.items():
            decay = p.dtype.type(1.0 - 2.0 * lr * l2)
            if decay != 1:
                p *= decay
            p -= p.dtype.type(lr) * layer.grads[key]


def accuracy(net: Network, x: np.ndarray, y: np.ndarray, batch: int = 64) -> float:
    preds = predict_labels(net, x, batch)
    return float(np.mean(preds == y)) if len(y) else float("nan")


def predict_labels(net: Network, x: np.ndarray, batch: int = 64) -> np.ndarray:
    out = [net.forward(x[i : i + batch]).argmax(axis=1) for i in range(0, len(x), batch)]
    return np.concatenate(out) if out else np.zeros(0, dtype=np.intp)


def train(
    net: Network,
    x: np.ndarray,
    y: np.ndarray,
    cfg: TrainConfig,
    x_test: np.ndarray | None = None,
    y_test: np.ndarray | None = None,
    on_epoch: Callable[[EpochStats], bool | None] | None = None,
) -> tuple[ModelWeights, list[EpochStats]]:
    """Train in place. ``train_acc`` is measured on the dropout-active passes.

    ``on_epoch`` sees each epoch's stats; returning True stops training early.
    """
    if len(x) == 0:
        raise ConfigError("training set is empty")
    if len(x) != len(y):
        raise ValueError("x and y lengths differ")
    y = np.asarray(y, dtype=np.intp)
    x = x.astype(net.dtype, copy=False)
    rng = np.random.default_rng(cfg.seed)
    set_dropout_seed(net, cfg.seed + 1)
    history = []
    n = len(x)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        total_loss = 0.0
        correct = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            logits = net.forward(x[idx], training=True)
            loss, probs, dlogits = softmax_cross_entropy(logits, y[idx])
            net.backward(dlogits.astype(net.dtype, copy=False))
            sgd_step(net, cfg.learning_rate, cfg.l2)
            total_loss += loss * len(idx)
            correct += int((probs.argmax(axis=1) == y[idx]).sum())
        stats = EpochStats(epoch, total_loss / n, correct / n)
        if x_test is not None and y_test is not None and len(y_test):
            stats.test_acc = accuracy(net, x_test.astype(net.dtype, copy=False), np.asarray(y_test))
        history.append(stats)
        log.debug("epoch %d loss %.5f acc %.3f", epoch, stats.loss, stats.train_acc)
        if on_epoch is not None and on_epoch(stats):
            break
    net.metadata.update({"seed": net.metadata.get("seed", cfg.seed), "epochs_run":
                         int(net.metadata.get("epochs_run", 0)) + len(history),
                         "train_seed": cfg.seed})
    return network_weights(net), history


def predict(net: Network, crop: Image, classes: list[str] | None = None) -> tuple[int | str, float]:
    """Top class for one crop and its softmax probability."""
    size = net.input_shape[0]
    probs = net.predict_proba(prepare_crop(crop, size, net.dtype)[None])[0]
    k = int(probs.argmax())
    label = classes[k] if classes else k
    return label, float(probs[k])


def write_history_csv(history: list[EpochStats], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss", "train_acc", "test_acc"])
        for s in history:
            writer.writerow([s.epoch, f"{s.loss:.8g}", f"{s.train_acc:.6f}",
                             "" if np.isnan(s.test_acc) else f"{s.test_acc:.6f}"])


def save_weights(weights: ModelWeights, path: str | Path) -> str:
    meta = {"spec": weights.spec.to_dict(), "metadata": weights.metadata, "classes": weights.classes}
    return write_container(path, WEIGHTS_MAGIC, meta, weights.tensors)


def load_weights(path: str | Path) -> ModelWeights:
    meta, tensors, _ = read_container(path, WEIGHTS_MAGIC)
    return ModelWeights(NetworkSpec(**meta["spec"]), tensors, meta.get("metadata", {}),
                        list(meta.get("classes", [])))
