import hashlib
import json
import math
import struct

import numpy as np
import pytest

from circuitrec.container import read_container, write_container
from circuitrec.errors import ConfigError, FormatError
from circuitrec.imaging import ColorSpace, Image
from circuitrec.nanocnn import (
    Dense, Network, NetworkSpec, TrainConfig, build_network, load_weights, network_weights,
    param_count, predict, prepare_crop, run_gradient_check, save_weights, train, write_history_csv,
)
from circuitrec.nanocnn.network import ModelWeights
from circuitrec.nanocnn.train import WEIGHTS_MAGIC, sgd_step

# hand-derived post-pool shapes (valid 3x3 convs, floor pooling 4/4 then 2/2)
SHAPES = {
    300: [(74, 74, 32), (36, 36, 64), (17, 17, 128), (7, 7, 256)],
    200: [(49, 49, 32), (23, 23, 64), (10, 10, 128), (4, 4, 256)],
    150: [(37, 37, 32), (17, 17, 64), (7, 7, 128), (2, 2, 256)],
}


def expected_params(size, classes, fc1_bias):
    """Independent layer-by-layer sum."""
    conv = sum(9 * cin * cout + cout for cin, cout in [(3, 32), (32, 64), (64, 128), (128, 256)])
    side = SHAPES[size][-1][0]
    flat = side * side * 256
    return conv + flat * 256 + (256 if fc1_bias else 0) + 256 * 64 + 64 + 64 * classes + classes


def pooled_shapes(net):
    return [s for name, s in net.shape_chain() if name == "MaxPool2D"]


@pytest.mark.parametrize("size", [150, 200, 300])
def test_shape_chain(size):
    net = build_network(NetworkSpec(size, 14))
    assert pooled_shapes(net) == SHAPES[size]


def test_conv_outputs_300():
    chain = build_network(NetworkSpec(300, 14)).shape_chain()
    convs = [s[0] for name, s in chain if name == "Conv2D"]
    assert convs == [298, 72, 34, 15]


def test_expected_params_oracle_matches_paper():
    # the published 3,617,294 total is the all-bias count of this architecture
    assert expected_params(300, 14, True) == 3_617_294


@pytest.mark.parametrize("size,classes,bias", [
    (300, 14, True), (300, 14, False), (300, 31, True), (300, 31, False),
    (200, 14, True), (150, 14, True), (150, 14, False), (150, 31, True),
])
def test_param_count(size, classes, bias):
    net = build_network(NetworkSpec(size, classes, fc1_bias=bias))
    assert param_count(net) == expected_params(size, classes, bias)


def test_param_count_frozen_values():
    counts = {
        (300, 14, True): 3_617_294, (300, 14, False): 3_617_038,
        (300, 31, True): 3_618_399, (300, 31, False): 3_618_143,
        (150, 14, True): 668_174, (150, 14, False): 667_918, (200, 14, True): 1_454_606,
    }
    for (size, classes, bias), n in counts.items():
        assert param_count(build_network(NetworkSpec(size, classes, fc1_bias=bias))) == n


def test_param_count_empty_network():
    assert param_count(Network([], (1, 1, 3))) == 0


def test_spec_validation():
    with pytest.raises(ConfigError):
        NetworkSpec(input_size=128)
    with pytest.raises(ConfigError):
        NetworkSpec(num_classes=1)
    with pytest.raises(ConfigError):
        NetworkSpec(dropout_rate=1.0)


def test_dropout_positions():
    net = build_network(NetworkSpec(150, 14))
    names = [type(l).__name__ for l in net.layers]
    pools = [i for i, n in enumerate(names) if n == "MaxPool2D"]
    drops = [i for i, n in enumerate(names) if n == "Dropout"]
    assert drops == [pools[1] + 1, pools[3] + 1]


def test_build_deterministic_and_he_uniform():
    a = build_network(NetworkSpec(150, 14), seed=3)
    b = build_network(NetworkSpec(150, 14), seed=3)
    for (na, pa), (nb, pb) in zip(a.named_params(), b.named_params()):
        assert na == nb and np.array_equal(pa, pb)
    for layer in a.layers:
        if "w" in layer.params:
            limit = math.sqrt(6.0 / layer.fan_in())
            assert np.abs(layer.params["w"]).max() <= limit
            if "b" in layer.params:
                assert not layer.params["b"].any()


def tiny_data(rng, n=8, size=150):
    x = rng.random((n, size, size, 3)).astype(np.float32)
    y = np.arange(n) % 4
    return x, y


def test_lr_zero_keeps_weights(rng):
    net = build_network(NetworkSpec(150, 4), seed=1)
    before = {k: v.copy() for k, v in net.named_params()}
    x, y = tiny_data(rng)
    train(net, x, y, TrainConfig(batch_size=4, learning_rate=0.0, epochs=2))
    for k, v in net.named_params():
        assert np.array_equal(v, before[k])


def test_zero_input_zero_init_loss_is_log_k(rng):
    net = build_network(NetworkSpec(150, 4), seed=1)
    for _, p in net.named_params():
        p[...] = 0
    x = np.zeros((4, 150, 150, 3), np.float32)
    _, hist = train(net, x, np.arange(4), TrainConfig(batch_size=4, learning_rate=1e-3, epochs=2))
    for h in hist:
        assert h.loss == pytest.approx(math.log(4), rel=1e-6)


def test_l2_only_step_shrinks_exactly():
    net = build_network(NetworkSpec(150, 4), seed=0, dtype=np.float64)
    before = {k: v.copy() for k, v in net.named_params()}
    for layer in net.layers:
        for key, p in layer.params.items():
            layer.grads[key] = np.zeros_like(p)
    lr, l2 = 0.1, 0.01
    sgd_step(net, lr, l2)
    for k, v in net.named_params():
        assert np.array_equal(v, before[k] * (1 - 2 * lr * l2))


def test_uniform_network_confidence():
    net = build_network(NetworkSpec(150, 5))
    for _, p in net.named_params():
        p[...] = 0
    label, conf = predict(net, Image(np.zeros((20, 30, 3), np.uint8)))
    assert label == 0 and conf == pytest.approx(1 / 5)


def test_predict_is_stateless(rng):
    net = build_network(NetworkSpec(150, 4), seed=2)
    crops = [Image(rng.integers(0, 256, (30, 40, 3), dtype=np.uint8)) for _ in range(3)]
    first = [predict(net, c) for c in crops]
    again = [predict(net, c) for c in reversed(crops)][::-1]
    assert first == again


def test_prepare_crop_squashes_and_scales():
    arr = prepare_crop(Image(np.full((10, 30, 3), 255, np.uint8)), 150)
    assert arr.shape == (150, 150, 3) and arr.dtype == np.float32
    assert np.all(arr == 1.0)
    with pytest.raises(ValueError):
        prepare_crop(Image(np.zeros((4, 4, 1)), ColorSpace.GRAY), 150)


def test_empty_training_set():
    net = build_network(NetworkSpec(150, 4))
    with pytest.raises(ConfigError):
        train(net, np.zeros((0, 150, 150, 3), np.float32), np.zeros(0), TrainConfig())


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=0)
    with pytest.raises(ConfigError):
        TrainConfig(learning_rate=-1)


def test_training_deterministic_double(rng):
    x, y = tiny_data(rng, n=6)
    outs = []
    for _ in range(2):
        net = build_network(NetworkSpec(150, 4), seed=5, dtype=np.float64)
        w, hist = train(net, x.astype(np.float64), y, TrainConfig(batch_size=4, learning_rate=1e-2, epochs=2, seed=9))
        outs.append((w, [h.loss for h in hist]))
    (wa, la), (wb, lb) = outs
    assert la == lb
    for k in wa.tensors:
        assert np.array_equal(wa.tensors[k], wb.tensors[k])


def test_history_csv(tmp_path, rng):
    x, y = tiny_data(rng, n=4)
    net = build_network(NetworkSpec(150, 4))
    _, hist = train(net, x, y, TrainConfig(batch_size=4, learning_rate=1e-3, epochs=3), x, y)
    write_history_csv(hist, tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "epoch,loss,train_acc,test_acc"
    assert len(lines) == 4 and lines[3].startswith("3,")


# -- persistence -------------------------------------------------------------------

def test_weights_round_trip(tmp_path):
    net = build_network(NetworkSpec(150, 14, fc1_bias=False), seed=4)
    net.metadata["epochs_run"] = 7
    w = network_weights(net, classes=[f"c{i}" for i in range(14)])
    digest = save_weights(w, tmp_path / "w.bin")
    back = load_weights(tmp_path / "w.bin")
    assert back.spec == w.spec and back.classes == w.classes and back.metadata == w.metadata
    for k, v in w.tensors.items():
        assert back.tensors[k].dtype == v.dtype and np.array_equal(back.tensors[k], v)
    net2 = back.to_network()
    for (_, a), (_, b) in zip(net.named_params(), net2.named_params()):
        assert np.array_equal(a, b)
    # digest oracle: sha256 over the little-endian payload in header order
    raw = (tmp_path / "w.bin").read_bytes()
    magic, version, hlen = struct.unpack_from("<8sII", raw)
    header = json.loads(raw[16 : 16 + hlen])
    assert magic == WEIGHTS_MAGIC and version == 1
    payload = b"".join(w.tensors[e["name"]].astype("<f4").tobytes() for e in header["tensors"])
    assert hashlib.sha256(payload).hexdigest() == digest == header["sha256"]


def test_container_errors(tmp_path):
    path = tmp_path / "c.bin"
    write_container(path, b"TESTMAGI", {"a": 1}, {"x": np.arange(6.0).reshape(2, 3)})
    meta, tensors, _ = read_container(path, b"TESTMAGI")
    assert meta == {"a": 1} and tensors["x"].tolist() == [[0, 1, 2], [3, 4, 5]]
    raw = path.read_bytes()
    with pytest.raises(FormatError):
        read_container(path, b"OTHERMAG")
    path.write_bytes(raw[:-3])
    with pytest.raises(FormatError):
        read_container(path, b"TESTMAGI")
    path.write_bytes(raw + b"\0")
    with pytest.raises(FormatError):
        read_container(path, b"TESTMAGI")
    path.write_bytes(raw[:8] + struct.pack("<I", 2) + raw[12:])
    with pytest.raises(FormatError):
        read_container(path, b"TESTMAGI")
    corrupted = bytearray(raw)
    corrupted[-1] ^= 0xFF
    path.write_bytes(bytes(corrupted))
    with pytest.raises(FormatError):
        read_container(path, b"TESTMAGI")
    path.write_bytes(raw[:5])
    with pytest.raises(FormatError):
        read_container(path, b"TESTMAGI")


def test_model_weights_layout_mismatch():
    w = network_weights(build_network(NetworkSpec(150, 4)))
    bad = ModelWeights(NetworkSpec(150, 5), w.tensors)
    with pytest.raises(ValueError):
        bad.to_network()


# -- gradient check ----------------------------------------------------------------

def test_gradcheck_linear():
    assert run_gradient_check(linear=True).max_rel_error < 1e-8


def test_gradcheck_relu():
    res = run_gradient_check()
    assert res.max_rel_error < 1e-4
    assert res.checked > 0 and len(res.per_tensor) == 8


def test_gradcheck_dropout_fixed_mask():
    assert run_gradient_check(dropout=True).max_rel_error < 1e-4


def test_gradcheck_detects_wrong_gradient(monkeypatch):
    orig = Dense.backward

    def broken(self, dout):
        dx = orig(self, dout)
        self.grads["w"] = self.grads["w"] * 1.01
        return dx

    monkeypatch.setattr(Dense, "backward", broken)
    assert run_gradient_check().max_rel_error > 1e-3


def test_on_epoch_can_stop_early(rng):
    x, y = tiny_data(rng, n=4)
    net = build_network(NetworkSpec(150, 4))
    _, hist = train(net, x, y, TrainConfig(batch_size=4, learning_rate=1e-3, epochs=10),
                    on_epoch=lambda s: s.epoch == 2)
    assert len(hist) == 2 and net.metadata["epochs_run"] == 2
