import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from circuitrec import _kernels
from circuitrec.segmentation import grid_edges

py = _kernels.python_kernels
cy = _kernels.compiled_kernels
needs_compiled = pytest.mark.skipif(cy is None, reason="compiled kernels not built")


def test_backend_selected():
    assert _kernels.BACKEND in ("cython", "python")
    if cy is not None and not os.environ.get("CIRCUITREC_PURE_PYTHON"):
        assert _kernels.BACKEND == "cython"


def test_env_forces_python_backend():
    code = "from circuitrec import _kernels; print(_kernels.BACKEND)"
    env = dict(os.environ, CIRCUITREC_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@needs_compiled
@given(arrays(np.uint8, st.tuples(st.integers(1, 12), st.integers(1, 12), st.just(3))),
       st.floats(0.5, 500.0), st.integers(1, 30))
def test_fh_merge_equivalent(px, k, min_size):
    a, b, w = grid_edges(px.astype(np.float64))
    order = np.argsort(w, kind="stable")
    a, b, w = a[order], b[order], w[order]
    n = px.shape[0] * px.shape[1]
    lp = py.fh_merge(a, b, w, n, k, min_size)
    lc = cy.fh_merge(a, b, w, n, k, min_size)
    assert np.array_equal(np.asarray(lp), np.asarray(lc))


@needs_compiled
@pytest.mark.parametrize("dtype", [np.float32, np.float64])
@given(data=st.data())
def test_maxpool_equivalent(dtype, data):
    n = data.draw(st.integers(1, 3))
    h = data.draw(st.integers(1, 12))
    w = data.draw(st.integers(1, 12))
    c = data.draw(st.integers(1, 5))
    window = data.draw(st.integers(1, min(h, w)))
    stride = data.draw(st.integers(1, 4))
    # small integer values make ties common
    x = data.draw(arrays(np.int8, (n, h, w, c), elements=st.integers(-3, 3))).astype(dtype)
    op, ap = py.maxpool_forward(x, window, stride)
    oc, ac = cy.maxpool_forward(x, window, stride)
    assert np.array_equal(op, oc) and np.array_equal(ap, ac)
    dout = np.arange(op.size, dtype=dtype).reshape(op.shape)
    assert np.array_equal(py.maxpool_backward(dout, ap, x.shape, window, stride),
                          cy.maxpool_backward(dout, ac, x.shape, window, stride))


@needs_compiled
@pytest.mark.parametrize("dtype", [np.float32, np.float64])
@given(data=st.data())
def test_relu_equivalent(dtype, data):
    x = data.draw(arrays(dtype, st.integers(0, 50), elements=st.floats(-5, 5, width=32)))
    fp, fc = py.relu_forward(x.copy()), cy.relu_forward(x.copy())
    assert np.array_equal(fp, fc)
    g = np.linspace(-1, 1, x.size).astype(dtype)
    assert np.array_equal(py.relu_backward(g.copy(), fp), cy.relu_backward(g.copy(), fc))
