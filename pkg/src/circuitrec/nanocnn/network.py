"""The seven-weight-layer recognition network and its container class."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigError
from .layers import Conv2D, Dense, Dropout, Flatten, Layer, MaxPool2D, ReLU, softmax

INPUT_SIZES = (150, 200, 300)
PAPER_CLASS_COUNTS = (14, 31)


@dataclass(frozen=True)
class NetworkSpec:
    input_size: int = 150
    num_classes: int = 14
    fc1_bias: bool = True
    dropout_rate: float = 0.5

    def __post_init__(self) -> None:
        if self.input_size not in INPUT_SIZES:
            raise ConfigError(f"input_size must be one of {INPUT_SIZES}, got {self.input_size}")
        if self.num_classes < 2:
            raise ConfigError("num_classes must be >= 2")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


class Network:
    """An ordered stack of layers ending in logits.

    ``input_shape`` is (H, W, C) of a single sample.
    """

    def __init__(self, layers: list[Layer], input_shape: tuple[int, int, int],
                 spec: NetworkSpec | None = None, metadata: dict | None = None):
        self.layers = layers
        if layers and isinstance(layers[0], Conv2D):
            layers[0].input_grad = False
        self.input_shape = tuple(input_shape)
        self.spec = spec
        self.metadata = dict(metadata or {})

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x, training)
        return x

    def backward(self, dout: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return softmax(self.forward(x, training=False))

    def named_params(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for i, layer in enumerate(self.layers):
            for key, arr in layer.params.items():
                out.append((f"{i}.{type(layer).__name__.lower()}.{key}", arr))
        return out

    def named_grads(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for i, layer in enumerate(self.layers):
            for key in layer.params:
                out.append((f"{i}.{type(layer).__name__.lower()}.{key}", layer.grads[key]))
        return out

    def shape_chain(self) -> list[tuple[str, tuple[int, ...]]]:
        shape = self.input_shape
        chain = []
        for layer in self.layers:
            shape = layer.output_shape(shape)
            chain.append((type(layer).__name__, shape))
        return chain

    @property
    def dtype(self):
        for _, arr in self.named_params():
            return arr.dtype
        return np.dtype(np.float32)


def param_count(network: Network) -> int:
    return sum(int(arr.size) for _, arr in network.named_params())


def he_uniform(layers: list[Layer], rng: np.random.Generator) -> None:
    """Fan-in He-uniform weights, zero biases."""
    for layer in layers:
        if "w" not in layer.params:
            continue
        w = layer.params["w"]
        limit = np.sqrt(6.0 / layer.fan_in())
        w[...] = rng.uniform(-limit, limit, size=w.shape).astype(w.dtype)
        if "b" in layer.params:
            layer.params["b"][...] = 0


def recognition_layers(spec: NetworkSpec, rng: np.random.Generator, dtype=np.float32) -> list[Layer]:
    layers: list[Layer] = []
    channels = 3
    pools = [(4, 4), (2, 2), (2, 2), (2, 2)]
    for stage, (filters, (win, stride)) in enumerate(zip((32, 64, 128, 256), pools)):
        layers += [Conv2D(channels, filters, 3, dtype=dtype), ReLU(inplace=True),
                   MaxPool2D(win, stride)]
        if stage in (1, 3):
            layers.append(Dropout(spec.dropout_rate, rng))
        channels = filters
    layers.append(Flatten())
    shape = (spec.input_size, spec.input_size, 3)
    for layer in layers:
        shape = layer.output_shape(shape)
    flat = shape[0]
    layers += [
        Dense(flat, 256, bias=spec.fc1_bias, dtype=dtype), ReLU(inplace=True),
        Dense(256, 64, dtype=dtype), ReLU(inplace=True),
        Dense(64, spec.num_classes, dtype=dtype),
    ]
    return layers


def build_network(spec: NetworkSpec, seed: int = 0, dtype=np.float32) -> Network:
    rng = np.random.default_rng(seed)
    layers = recognition_layers(spec, rng, dtype=dtype)
    he_uniform(layers, rng)
    return Network(layers, (spec.input_size, spec.input_size, 3), spec, {"seed": seed})


def set_dropout_seed(network: Network, seed: int) -> None:
    rng = np.random.default_rng(seed)
    for layer in network.layers:
        if isinstance(layer, Dropout):
            layer.rng = rng


@dataclass
class ModelWeights:
    spec: NetworkSpec
    tensors: dict[str, np.ndarray]
    metadata: dict = field(default_factory=dict)
    classes: list[str] = field(default_factory=list)

    def to_network(self) -> Network:
        dtype = next(iter(self.tensors.values())).dtype if self.tensors else np.float32
        net = build_network(self.spec, seed=int(self.metadata.get("seed", 0)), dtype=dtype)
        names = [n for n, _ in net.named_params()]
        if set(names) != set(self.tensors):
            raise ValueError("weight tensors do not match the network layout")
        for name, arr in net.named_params():
            src = self.tensors[name]
            if src.shape != arr.shape:
                raise ValueError(f"{name}: shape {src.shape} != {arr.shape}")
            arr[...] = src
        net.metadata = dict(self.metadata)
        return net


def network_weights(net: Network, classes: list[str] | None = None) -> ModelWeights:
    if net.spec is None:
        raise ValueError("only spec-built networks can be exported")
    return ModelWeights(
        net.spec,
        {name: arr.copy() for name, arr in net.named_params()},
        dict(net.metadata),
        list(classes or []),
    )
