"""Linear one-vs-rest SVM trained by (sub)gradient descent on the hinge loss."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .container import read_container, write_container
from .errors import ConfigError
from .features import FeatureMode

SVM_MAGIC = b"NCNNSVM\x00"


@dataclass
class SvmModel:
    mode: FeatureMode
    weights: np.ndarray  # (classes, kept dims)
    bias: np.ndarray  # (classes,)
    mean: np.ndarray  # (dims,)
    std: np.ndarray  # (dims,), 0 marks a dropped constant dimension
    classes: list[str] = field(default_factory=list)

    @property
    def keep(self) -> np.ndarray:
        return self.std > 0

    def standardize(self, x: np.ndarray) -> np.ndarray:
        keep = self.keep
        return (x[..., keep] - self.mean[keep]) / self.std[keep]

    def scores(self, x: np.ndarray) -> np.ndarray:
        return self.standardize(np.asarray(x, dtype=np.float64)) @ self.weights.T + self.bias


def svm_train(
    x: np.ndarray,
    y: np.ndarray,
    mode: FeatureMode | str,
    epochs: int = 300,
    lr: float = 0.1,
    reg: float = 1e-3,
    seed: int = 0,
    batch_size: int | None = None,
    classes: list[str] | None = None,
) -> SvmModel:
    """Fit one binary hinge-loss classifier per class.

    Features are standardized with the training mean and population std;
    dimensions with zero spread are dropped. With ``batch_size=None`` each
    step uses the full training set, so duplicating every sample leaves the
    model unchanged. Otherwise mini-batches are drawn from a seeded shuffle.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.intp)
    labels = np.unique(y)
    if labels.size < 2:
        raise ConfigError("SVM training needs at least two classes")
    num_classes = int(labels.max()) + 1
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std[std < 1e-12] = 0.0
    keep = std > 0
    xs = (x[:, keep] - mean[keep]) / std[keep]
    n, d = xs.shape
    targets = np.where(y[:, None] == np.arange(num_classes)[None, :], 1.0, -1.0)
    w = np.zeros((num_classes, d))
    b = np.zeros(num_classes)
    rng = np.random.default_rng(seed)
    step = n if batch_size is None else max(1, batch_size)
    for _ in range(epochs):
        order = np.arange(n) if batch_size is None else rng.permutation(n)
        for start in range(0, n, step):
            idx = order[start : start + step]
            xb, tb = xs[idx], targets[idx]
            margin = tb * (xb @ w.T + b)
            active = (margin < 1.0) * tb  # (batch, classes)
            gw = -(active.T @ xb) / len(idx) + reg * w
            gb = -active.sum(axis=0) / len(idx)
            w -= lr * gw
            b -= lr * gb
    return SvmModel(FeatureMode(mode), w, b, mean, std, list(classes or []))


def svm_predict(model: SvmModel, vector, mode: FeatureMode | str | None = None) -> int:
    """Arg-max class; ties go to the lowest class index."""
    values = getattr(vector, "values", vector)
    vmode = getattr(vector, "mode", mode)
    if vmode is not None and FeatureMode(vmode) is not model.mode:
        raise ValueError(f"vector mode {FeatureMode(vmode).name} does not match model {model.mode.name}")
    return int(np.argmax(model.scores(np.asarray(values))))


def svm_predict_batch(model: SvmModel, x: np.ndarray) -> np.ndarray:
    return np.argmax(model.scores(x), axis=1)


def save_svm(model: SvmModel, path: str | Path) -> str:
    meta = {"mode": model.mode.value, "classes": model.classes}
    tensors = {"weights": model.weights, "bias": model.bias, "mean": model.mean, "std": model.std}
    return write_container(path, SVM_MAGIC, meta, tensors)


def load_svm(path: str | Path) -> SvmModel:
    meta, t, _ = read_container(path, SVM_MAGIC)
    return SvmModel(FeatureMode(meta["mode"]), t["weights"], t["bias"], t["mean"], t["std"],
                    list(meta.get("classes", [])))
