"""Finite-difference verification of the analytic gradients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import Conv2D, Dense, Dropout, Flatten, MaxPool2D, ReLU, softmax_cross_entropy
from .network import Network, he_uniform


@dataclass
class GradCheckResult:
    max_rel_error: float
    per_tensor: dict[str, float]
    checked: int


def small_network(seed: int = 0, linear: bool = False, dropout: bool = False,
                  input_size: int = 12, num_classes: int = 3) -> Network:
    """Reduced double-precision net: two convolutions and two dense layers.

    ``linear=True`` drops every ReLU and pool, leaving an affine map into
    the softmax.
    """
    rng = np.random.default_rng(seed)
    dt = np.float64
    if linear:
        layers = [Conv2D(3, 4, dtype=dt), Conv2D(4, 5, dtype=dt), Flatten()]
        side = input_size - 4
    else:
        layers = [Conv2D(3, 4, dtype=dt), ReLU(), MaxPool2D(2, 2),
                  Conv2D(4, 6, dtype=dt), ReLU(), MaxPool2D(2, 2)]
        side = ((input_size - 2) // 2 - 2) // 2
        if dropout:
            layers.append(Dropout(0.5, rng))
        layers.append(Flatten())
    flat = side * side * (5 if linear else 6)
    layers += [Dense(flat, 7, dtype=dt)]
    if not linear:
        layers.append(ReLU())
    layers.append(Dense(7, num_classes, dtype=dt))
    he_uniform(layers, rng)
    # non-zero biases so their gradients are exercised too
    for layer in layers:
        if "b" in layer.params:
            layer.params["b"][...] = rng.normal(0, 0.1, layer.params["b"].shape)
    return Network(layers, (input_size, input_size, 3))


def _loss(net: Network, x: np.ndarray, y: np.ndarray, training: bool) -> float:
    loss, _, _ = softmax_cross_entropy(net.forward(x, training=training), y)
    return loss


def gradient_check(net: Network, x: np.ndarray, y: np.ndarray, eps: float = 1e-5,
                   training: bool = False) -> GradCheckResult:
    """Compare backprop gradients with central differences.

    Error per tensor is ``|g_a - g_n| / max(|g_a| + |g_n|, 1e-12)`` using
    L2 norms over the whole tensor; the result reports the worst tensor.
    Any dropout layers must carry a ``fixed_mask`` when ``training`` is set.
    """
    if training:
        for layer in net.layers:
            if isinstance(layer, Dropout) and layer.fixed_mask is None:
                raise ValueError("dropout layers need a fixed mask for gradient checking")
    logits = net.forward(x, training=training)
    _, _, dlogits = softmax_cross_entropy(logits, y)
    net.backward(dlogits)
    analytic = {name: g.copy() for name, g in net.named_grads()}

    per_tensor = {}
    checked = 0
    for name, p in net.named_params():
        numeric = np.zeros_like(p)
        flat_p = p.reshape(-1)
        flat_n = numeric.reshape(-1)
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + eps
            up = _loss(net, x, y, training)
            flat_p[i] = orig - eps
            down = _loss(net, x, y, training)
            flat_p[i] = orig
            flat_n[i] = (up - down) / (2 * eps)
        a = analytic[name]
        denom = max(np.linalg.norm(a) + np.linalg.norm(numeric), 1e-12)
        per_tensor[name] = float(np.linalg.norm(a - numeric) / denom)
        checked += p.size
    return GradCheckResult(max(per_tensor.values()), per_tensor, checked)


def run_gradient_check(seed: int = 0, eps: float = 1e-5, linear: bool = False,
                       dropout: bool = False, batch: int = 2) -> GradCheckResult:
    """Gradient check on :func:`small_network` with random inputs and labels."""
    net = small_network(seed, linear=linear, dropout=dropout)
    rng = np.random.default_rng(seed + 1000)
    x = rng.random((batch,) + net.input_shape)
    y = rng.integers(0, 3, size=batch)
    if dropout:
        # freeze one mask per dropout layer by sampling on a forward pass
        h = x
        for layer in net.layers:
            if isinstance(layer, Dropout):
                keep = layer.rng.random(h.shape) >= layer.rate
                layer.fixed_mask = keep / (1.0 - layer.rate)
            h = layer.forward(h, training=False)
    return gradient_check(net, x, y, eps=eps, training=dropout)
