import numpy as np
import pytest
from hypothesis import given, strategies as st

from circuitrec.errors import ConfigError
from circuitrec.nanocnn import (
    Conv2D, Dense, Dropout, Flatten, MaxPool2D, ReLU,
    conv2d_backward, conv2d_forward, maxpool2d_backward, maxpool2d_forward, softmax,
    softmax_cross_entropy,
)
from circuitrec.nanocnn.layers import pool_output_size

from oracles import conv_loops, dense_loops, pool_backward_loops, pool_loops


def numeric_grad(f, arr, eps=1e-6):
    g = np.zeros_like(arr)
    flat, gf = arr.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        o = flat[i]
        flat[i] = o + eps
        up = f()
        flat[i] = o - eps
        down = f()
        flat[i] = o
        gf[i] = (up - down) / (2 * eps)
    return g


# -- conv -----------------------------------------------------------------------

def test_conv_all_ones():
    out = conv2d_forward(np.ones((1, 3, 3, 1)), np.ones((1, 3, 3, 1)), np.zeros(1))
    assert out.shape == (1, 1, 1, 1) and out[0, 0, 0, 0] == 9


def test_conv_delta_filter_is_center_crop(rng):
    x = rng.standard_normal((2, 6, 5, 1))
    w = np.zeros((1, 3, 3, 1))
    w[0, 1, 1, 0] = 1
    assert np.array_equal(conv2d_forward(x, w, None), x[:, 1:-1, 1:-1, :])


def test_conv_matches_loops(rng):
    x = rng.standard_normal((1, 5, 5, 2))
    w = rng.standard_normal((3, 3, 3, 2))
    b = rng.standard_normal(3)
    assert np.allclose(conv2d_forward(x, w, b), conv_loops(x, w, b), atol=1e-6)


def test_conv_layer_matches_functional(rng):
    layer = Conv2D(2, 3, dtype=np.float64)
    layer.params["w"][...] = rng.standard_normal(layer.params["w"].shape)
    layer.params["b"][...] = rng.standard_normal(3)
    x = rng.standard_normal((2, 7, 6, 2))
    out = layer.forward(x)
    assert np.allclose(out, conv_loops(x, layer.params["w"], layer.params["b"]), atol=1e-9)
    dout = rng.standard_normal(out.shape)
    dx = layer.backward(dout)
    dx2, dw2, db2 = conv2d_backward(dout, x, layer.params["w"])
    assert np.allclose(dx, dx2) and np.allclose(layer.grads["w"], dw2) and np.allclose(layer.grads["b"], db2)


def test_conv_backward_finite_difference(rng):
    x = rng.standard_normal((2, 5, 4, 2))
    w = rng.standard_normal((3, 3, 3, 2))
    b = rng.standard_normal(3)
    g = rng.standard_normal((2, 3, 2, 3))
    dx, dw, db = conv2d_backward(g, x, w)

    def loss():
        return float((conv2d_forward(x, w, b) * g).sum())

    assert np.allclose(dx, numeric_grad(loss, x), atol=1e-6)
    assert np.allclose(dw, numeric_grad(loss, w), atol=1e-6)
    assert np.allclose(db, numeric_grad(loss, b), atol=1e-6)


def test_first_conv_skips_input_grad(rng):
    layer = Conv2D(1, 1, dtype=np.float64)
    layer.input_grad = False
    out = layer.forward(rng.standard_normal((1, 4, 4, 1)))
    assert layer.backward(np.ones_like(out)) is None


def test_conv_rejects_bad_shapes():
    with pytest.raises(ValueError):
        conv2d_forward(np.zeros((1, 2, 5, 1)), np.zeros((1, 3, 3, 1)), None)
    with pytest.raises(ValueError):
        conv2d_forward(np.zeros((1, 5, 5, 2)), np.zeros((1, 3, 3, 1)), None)


# -- pool -----------------------------------------------------------------------

def test_pool_constant_and_global_max():
    c = np.full((1, 8, 8, 2), 3.0)
    out, _ = maxpool2d_forward(c, 4, 4)
    assert np.all(out == 3.0)
    x = np.arange(16, dtype=float).reshape(1, 4, 4, 1)
    out, _ = maxpool2d_forward(x, 4, 4)
    assert out.shape == (1, 1, 1, 1) and out[0, 0, 0, 0] == 15


def test_pool_output_extent_paper():
    assert pool_output_size(298, 4, 4) == 74
    assert [pool_output_size(n, 2, 2) for n in (72, 34, 15)] == [36, 17, 7]


def test_pool_ties_route_to_first(rng):
    x = np.zeros((1, 2, 2, 1))
    out, arg = maxpool2d_forward(x, 2, 2)
    dx = maxpool2d_backward(np.ones_like(out), arg, x.shape, 2, 2)
    assert dx[0, :, :, 0].tolist() == [[1, 0], [0, 0]]


@pytest.mark.parametrize("window,stride", [(2, 2), (4, 4), (3, 2), (2, 1)])
def test_pool_matches_loops(rng, window, stride):
    x = rng.standard_normal((2, 9, 10, 3))
    x[0, :4, :4, 0] = 1.0  # plateau exercises tie handling
    out, arg = maxpool2d_forward(x, window, stride)
    ref, route = pool_loops(x, window, stride)
    assert np.array_equal(out, ref)
    dout = rng.standard_normal(out.shape)
    dx = maxpool2d_backward(dout, arg, x.shape, window, stride)
    assert np.allclose(dx, pool_backward_loops(dout, route, x.shape))


def test_pool_layer_shapes():
    layer = MaxPool2D(4, 4)
    assert layer.output_shape((298, 298, 32)) == (74, 74, 32)
    with pytest.raises(ValueError):
        maxpool2d_forward(np.zeros((1, 3, 3, 1)), 4, 4)


# -- dense, relu, dropout, softmax ---------------------------------------------

def test_dense_identity_and_zero():
    layer = Dense(4, 4, dtype=np.float64)
    layer.params["w"][...] = np.eye(4)
    x = np.arange(8.0).reshape(2, 4)
    assert np.array_equal(layer.forward(x), x)
    layer.params["w"][...] = 0
    layer.params["b"][...] = [1, 2, 3, 4]
    assert np.array_equal(layer.forward(x), np.tile([1.0, 2, 3, 4], (2, 1)))


def test_dense_matches_loops_and_fd(rng):
    layer = Dense(8, 4, dtype=np.float64)
    layer.params["w"][...] = rng.standard_normal((8, 4))
    layer.params["b"][...] = rng.standard_normal(4)
    x = rng.standard_normal((3, 8))
    out = layer.forward(x)
    assert np.allclose(out, dense_loops(x, layer.params["w"], layer.params["b"]), atol=1e-12)
    g = rng.standard_normal(out.shape)
    dx = layer.backward(g)

    def loss():
        return float((layer.forward(x) * g).sum())

    assert np.allclose(dx, numeric_grad(loss, x), atol=1e-6)
    assert np.allclose(layer.grads["w"], numeric_grad(loss, layer.params["w"]), atol=1e-6)
    assert np.allclose(layer.grads["b"], numeric_grad(loss, layer.params["b"]), atol=1e-6)


def test_dense_without_bias():
    layer = Dense(3, 2, bias=False)
    assert set(layer.params) == {"w"}


@pytest.mark.parametrize("inplace", [False, True])
def test_relu(inplace):
    layer = ReLU(inplace=inplace)
    x = np.array([[-1.0, 0.0, 2.0]])
    out = layer.forward(x.copy())
    assert out.tolist() == [[0, 0, 2]]
    assert layer.backward(np.ones((1, 3))).tolist() == [[0, 0, 1]]


def test_relu_out_of_place_leaves_input():
    x = np.array([-1.0, 3.0])
    ReLU().forward(x)
    assert x.tolist() == [-1.0, 3.0]


def test_dropout_rate_zero_is_identity(rng):
    x = rng.standard_normal((4, 5))
    assert np.array_equal(Dropout(0.0).forward(x, training=True), x)


def test_dropout_inference_identity_and_scaling(rng):
    d = Dropout(0.5, rng)
    x = np.ones((200, 50))
    assert np.array_equal(d.forward(x, training=False), x)
    y = d.forward(x, training=True)
    assert set(np.unique(y)) <= {0.0, 2.0}
    assert 0.45 < (y == 0).mean() < 0.55
    assert np.array_equal(d.backward(np.ones_like(x)), y)


def test_dropout_rate_one_rejected():
    with pytest.raises(ConfigError):
        Dropout(1.0)


def test_flatten_round_trip(rng):
    f = Flatten()
    x = rng.standard_normal((2, 3, 4, 5))
    assert f.forward(x).shape == (2, 60)
    assert f.backward(f.forward(x)).shape == x.shape


def test_softmax_equal_logits():
    k = 7
    loss, probs, _ = softmax_cross_entropy(np.zeros((3, k)), np.array([0, 3, 6]))
    assert np.allclose(probs, 1 / k)
    assert loss == pytest.approx(np.log(k))


@given(st.lists(st.floats(-50, 50), min_size=2, max_size=10))
def test_softmax_sums_to_one(logits):
    p = softmax(np.array([logits]))
    assert abs(p.sum() - 1.0) < 1e-6
    assert (p > 0).all() or max(logits) - min(logits) > 700


def test_softmax_cross_entropy_gradient(rng):
    logits = rng.standard_normal((4, 5))
    y = np.array([0, 1, 4, 2])
    _, _, grad = softmax_cross_entropy(logits, y)
    num = numeric_grad(lambda: softmax_cross_entropy(logits, y)[0], logits)
    assert np.allclose(grad, num, atol=1e-7)


def test_layer_oracles_on_200_random_tensors():
    rng = np.random.default_rng(99)
    for _ in range(200):
        n = int(rng.integers(1, 3))
        h, w = (int(v) for v in rng.integers(3, 8, 2))
        c, k = (int(v) for v in rng.integers(1, 4, 2))
        x = rng.standard_normal((n, h, w, c))
        wt = rng.standard_normal((k, 3, 3, c))
        b = rng.standard_normal(k)
        assert np.abs(conv2d_forward(x, wt, b) - conv_loops(x, wt, b)).max() < 1e-6
        win = int(rng.integers(1, min(h, w) + 1))
        stride = int(rng.integers(1, 4))
        assert np.abs(maxpool2d_forward(x, win, stride)[0] - pool_loops(x, win, stride)[0]).max() < 1e-6
        d_in, d_out = (int(v) for v in rng.integers(1, 10, 2))
        xd = rng.standard_normal((n, d_in))
        wd = rng.standard_normal((d_in, d_out))
        bd = rng.standard_normal(d_out)
        assert np.abs(xd @ wd + bd - dense_loops(xd, wd, bd)).max() < 1e-6
