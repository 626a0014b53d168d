# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled max-pool and ReLU kernels. Same contracts as ``_pypool``."""
import numpy as np
cimport numpy as cnp
from cython cimport floating

cnp.import_array()


def maxpool_forward(floating[:, :, :, ::1] x, Py_ssize_t window, Py_ssize_t stride):
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1], w = x.shape[2], c = x.shape[3]
    cdef Py_ssize_t ho = (h - window) // stride + 1, wo = (w - window) // stride + 1
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.empty((n, ho, wo, c), dtype=dtype)
    arg_arr = np.zeros((n, ho, wo, c), dtype=np.int32)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef int[:, :, :, ::1] arg = arg_arr
    cdef Py_ssize_t b, oy, ox, ki, kj, ch, y0, x0
    cdef int k
    cdef floating v
    cdef floating* po
    cdef floating* pi
    cdef int* pa
    cdef bint better
    with nogil:
        for b in range(n):
            for oy in range(ho):
                y0 = oy * stride
                for ox in range(wo):
                    x0 = ox * stride
                    po = &out[b, oy, ox, 0]
                    pa = &arg[b, oy, ox, 0]
                    pi = &x[b, y0, x0, 0]
                    for ch in range(c):
                        po[ch] = pi[ch]
                    for ki in range(window):
                        for kj in range(window):
                            k = <int>(ki * window + kj)
                            if k == 0:
                                continue
                            pi = &x[b, y0 + ki, x0 + kj, 0]
                            for ch in range(c):
                                v = pi[ch]
                                better = v > po[ch]
                                po[ch] = v if better else po[ch]
                                pa[ch] = k if better else pa[ch]
    return out_arr, arg_arr


def maxpool_backward(floating[:, :, :, ::1] dout, int[:, :, :, ::1] arg, tuple input_shape,
                     Py_ssize_t window, Py_ssize_t stride):
    cdef Py_ssize_t n = dout.shape[0], ho = dout.shape[1], wo = dout.shape[2], c = dout.shape[3]
    dtype = np.float32 if floating is float else np.float64
    dx_arr = np.zeros(input_shape, dtype=dtype)
    cdef floating[:, :, :, ::1] dx = dx_arr
    cdef Py_ssize_t b, oy, ox, ch
    cdef int k
    with nogil:
        for b in range(n):
            for oy in range(ho):
                for ox in range(wo):
                    for ch in range(c):
                        k = arg[b, oy, ox, ch]
                        dx[b, oy * stride + k // window, ox * stride + k % window, ch] += dout[b, oy, ox, ch]
    return dx_arr


def relu_forward(floating[::1] x):
    """Clamp negatives to zero in place."""
    cdef Py_ssize_t i
    with nogil:
        for i in range(x.shape[0]):
            x[i] = x[i] if x[i] > 0 else 0
    return np.asarray(x)


def relu_backward(floating[::1] dout, floating[::1] out):
    """Zero ``dout`` in place wherever the forward output was not positive."""
    cdef Py_ssize_t i
    with nogil:
        for i in range(dout.shape[0]):
            dout[i] = dout[i] if out[i] > 0 else 0
    return np.asarray(dout)
