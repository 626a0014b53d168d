"""Pure-numpy max-pool and ReLU kernels; reference for the compiled ones."""
import numpy as np


def maxpool_forward(x, window, stride):
    """Pool NHWC ``x``; returns (out, arg) where arg is the row-major offset
    of the winner inside its window, first occurrence on ties."""
    n, h, w, c = x.shape
    ho, wo = (h - window) // stride + 1, (w - window) // stride + 1
    best = x[:, : stride * ho : stride, : stride * wo : stride].copy()
    arg = np.zeros(best.shape, dtype=np.int32)
    for k in range(1, window * window):
        i, j = divmod(k, window)
        cand = x[:, i : i + stride * ho : stride, j : j + stride * wo : stride]
        better = cand > best
        np.copyto(best, cand, where=better)
        np.copyto(arg, k, where=better)
    return best, arg


def maxpool_backward(dout, arg, input_shape, window, stride):
    n, ho, wo, c = dout.shape
    dx = np.zeros(input_shape, dtype=dout.dtype)
    zero = dout.dtype.type(0)
    for k in range(window * window):
        i, j = divmod(k, window)
        dx[:, i : i + stride * ho : stride, j : j + stride * wo : stride] += np.where(arg == k, dout, zero)
    return dx


def relu_forward(x):
    """Clamp negatives to zero in place."""
    return np.maximum(x, x.dtype.type(0), out=x)


def relu_backward(dout, out):
    """Zero ``dout`` in place wherever the forward output was not positive."""
    return np.multiply(dout, out > 0, out=dout)
