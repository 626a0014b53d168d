"""Layer primitives with hand-written backward passes.

Tensors are numpy arrays in NHWC layout. Each layer caches what it needs
during ``forward`` and returns the input gradient from ``backward``;
parameter gradients land in ``layer.grads`` under the same keys as
``layer.params``.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .. import _kernels
from ..errors import ConfigError


# -- functional forms -------------------------------------------------------


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray | None) -> np.ndarray:
    """Valid cross-correlation, stride 1. x: (N,H,W,C), w: (K,kh,kw,C)."""
    k, kh, kw, c = w.shape
    if x.shape[-1] != c:
        raise ValueError(f"input has {x.shape[-1]} channels, filters expect {c}")
    if x.shape[1] < kh or x.shape[2] < kw:
        raise ValueError(f"input {x.shape[1]}x{x.shape[2]} smaller than kernel {kh}x{kw}")
    patches = sliding_window_view(x, (kh, kw), axis=(1, 2))  # N,Ho,Wo,C,kh,kw
    out = np.tensordot(patches, w.transpose(3, 1, 2, 0), axes=([3, 4, 5], [0, 1, 2]))
    if b is not None:
        out += b
    return out


def conv2d_backward(
    dout: np.ndarray, x: np.ndarray, w: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients w.r.t. input, filters and bias."""
    k, kh, kw, c = w.shape
    ho, wo = dout.shape[1], dout.shape[2]
    patches = sliding_window_view(x, (kh, kw), axis=(1, 2))
    dw = np.tensordot(dout, patches, axes=([0, 1, 2], [0, 1, 2]))  # K,C,kh,kw
    dw = dw.transpose(0, 2, 3, 1)
    db = dout.sum(axis=(0, 1, 2))
    dx = np.zeros_like(x)
    for i in range(kh):
        for j in range(kw):
            dx[:, i : i + ho, j : j + wo, :] += dout @ w[:, i, j, :]
    return dx, dw, db


def pool_output_size(n: int, window: int, stride: int) -> int:
    return (n - window) // stride + 1


def maxpool2d_forward(x: np.ndarray, window: int, stride: int) -> tuple[np.ndarray, np.ndarray]:
    """Max pooling with floor output size.

    Returns the pooled tensor and, per output cell, the row-major offset of
    the winning element inside its window (first occurrence on ties).
    """
    if window > x.shape[1] or window > x.shape[2]:
        raise ValueError(f"pool window {window} larger than input {x.shape[1]}x{x.shape[2]}")
    return _kernels.maxpool_forward(np.ascontiguousarray(x), window, stride)


def maxpool2d_backward(
    dout: np.ndarray, arg: np.ndarray, input_shape: tuple[int, ...], window: int, stride: int
) -> np.ndarray:
    return _kernels.maxpool_backward(
        np.ascontiguousarray(dout), arg, tuple(input_shape), window, stride
    )


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy over the batch; returns (loss, probs, dlogits)."""
    labels = np.asarray(labels, dtype=np.intp)
    z = logits - logits.max(axis=-1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    logp = z - logsum
    n = logits.shape[0]
    loss = float(-logp[np.arange(n), labels].mean())
    probs = np.exp(logp)
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    return loss, probs, grad / n


# -- layer objects ---------------------------------------------------------


class Layer:
    params: dict[str, np.ndarray]
    grads: dict[str, np.ndarray]

    def __init__(self) -> None:
        self.params = {}
        self.grads = {}

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dout: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def output_shape(self, shape: tuple[int, ...]) -> tuple[int, ...]:
        return shape

    def describe(self) -> dict:
        return {"type": type(self).__name__}


class Conv2D(Layer):
    """3x3 (by default) valid convolution.

    ``input_grad=False`` skips the input gradient, which the first layer
    of a network never needs.
    """

    def __init__(self, in_channels: int, filters: int, kernel: int = 3, dtype=np.float32):
        super().__init__()
        self.params["w"] = np.zeros((filters, kernel, kernel, in_channels), dtype=dtype)
        self.params["b"] = np.zeros(filters, dtype=dtype)
        self.input_grad = True
        self._cache = None

    def forward(self, x, training=False):
        w = self.params["w"]
        k, kh, kw, c = w.shape
        if x.shape[-1] != c:
            raise ValueError(f"input has {x.shape[-1]} channels, filters expect {c}")
        n, h, wd, _ = x.shape
        ho, wo = h - kh + 1, wd - kw + 1
        cols = sliding_window_view(x, (kh, kw), axis=(1, 2)).reshape(n * ho * wo, c * kh * kw)
        out = cols @ w.transpose(3, 1, 2, 0).reshape(c * kh * kw, k)
        out += self.params["b"]
        self._cache = (cols, x.shape)
        return out.reshape(n, ho, wo, k)

    def backward(self, dout):
        cols, xshape = self._cache
        w = self.params["w"]
        k, kh, kw, c = w.shape
        flat = dout.reshape(-1, k)
        self.grads["w"] = (cols.T @ flat).reshape(c, kh, kw, k).transpose(3, 1, 2, 0).copy()
        self.grads["b"] = flat.sum(axis=0)
        self._cache = None
        if not self.input_grad:
            return None
        ho, wo = dout.shape[1], dout.shape[2]
        dx = np.zeros(xshape, dtype=dout.dtype)
        for i in range(kh):
            for j in range(kw):
                dx[:, i : i + ho, j : j + wo, :] += dout @ w[:, i, j, :]
        return dx

    def output_shape(self, shape):
        h, w, _ = shape
        k, kh, kw, _ = self.params["w"].shape
        return (h - kh + 1, w - kw + 1, k)

    def fan_in(self) -> int:
        _, kh, kw, c = self.params["w"].shape
        return kh * kw * c

    def describe(self):
        k, kh, _, c = self.params["w"].shape
        return {"type": "Conv2D", "in": c, "filters": k, "kernel": kh}


class MaxPool2D(Layer):
    def __init__(self, window: int, stride: int):
        super().__init__()
        self.window, self.stride = window, stride
        self._cache = None

    def forward(self, x, training=False):
        out, arg = maxpool2d_forward(x, self.window, self.stride)
        self._cache = (arg, x.shape)
        return out

    def backward(self, dout):
        arg, shape = self._cache
        return maxpool2d_backward(dout, arg, shape, self.window, self.stride)

    def output_shape(self, shape):
        h, w, c = shape
        return (
            pool_output_size(h, self.window, self.stride),
            pool_output_size(w, self.window, self.stride),
            c,
        )

    def describe(self):
        return {"type": "MaxPool2D", "window": self.window, "stride": self.stride}


class Dense(Layer):
    def __init__(self, inputs: int, outputs: int, bias: bool = True, dtype=np.float32):
        super().__init__()
        self.params["w"] = np.zeros((inputs, outputs), dtype=dtype)
        if bias:
            self.params["b"] = np.zeros(outputs, dtype=dtype)
        self._x = None

    def forward(self, x, training=False):
        self._x = x
        out = x @ self.params["w"]
        if "b" in self.params:
            out += self.params["b"]
        return out

    def backward(self, dout):
        self.grads["w"] = self._x.T @ dout
        if "b" in self.params:
            self.grads["b"] = dout.sum(axis=0)
        return dout @ self.params["w"].T

    def output_shape(self, shape):
        return (self.params["w"].shape[1],)

    def fan_in(self) -> int:
        return self.params["w"].shape[0]

    def describe(self):
        d, m = self.params["w"].shape
        return {"type": "Dense", "in": d, "out": m, "bias": "b" in self.params}


class ReLU(Layer):
    """max(0, x). With ``inplace=True`` the input and incoming gradient
    buffers are overwritten, saving two large allocations per step."""

    def __init__(self, inplace: bool = False):
        super().__init__()
        self.inplace = inplace

    def forward(self, x, training=False):
        if self.inplace and x.flags.c_contiguous and x.flags.writeable:
            out = x
        else:
            out = np.array(x, order="C")
        self._out = _kernels.relu_forward(out.reshape(-1)).reshape(x.shape)
        return self._out

    def backward(self, dout):
        if not (self.inplace and dout.flags.c_contiguous and dout.flags.writeable
                and dout.dtype == self._out.dtype):
            dout = np.array(dout, dtype=self._out.dtype, order="C")
        return _kernels.relu_backward(dout.reshape(-1), self._out.reshape(-1)).reshape(self._out.shape)


class Flatten(Layer):
    def forward(self, x, training=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._shape)

    def output_shape(self, shape):
        return (int(np.prod(shape)),)


class Dropout(Layer):
    """Inverted dropout: survivors are scaled by 1/(1-rate) at train time.

    Setting ``fixed_mask`` reuses one mask for every forward pass, which
    keeps the function deterministic for finite-difference checks.
    """

    def __init__(self, rate: float, rng: np.random.Generator | None = None):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.fixed_mask: np.ndarray | None = None
        self._mask = None

    def forward(self, x, training=False):
        if not training or self.rate == 0.0:
            self._mask = None
            return x
        if self.fixed_mask is not None:
            mask = self.fixed_mask
        else:
            keep = self.rng.random(x.shape) >= self.rate
            mask = keep.astype(x.dtype) / x.dtype.type(1.0 - self.rate)
        self._mask = mask
        return x * mask

    def backward(self, dout):
        return dout if self._mask is None else dout * self._mask

    def describe(self):
        return {"type": "Dropout", "rate": self.rate}
