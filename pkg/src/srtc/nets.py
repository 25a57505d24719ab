"""The four network roles: specialized localizer, generator, critic, and
mutual-information estimator.

All networks are stacks of fully connected layers over the autodiff
graph.  Parameters are stored as plain float64 arrays in named dicts;
training binds them onto a fresh graph each step, either as trainable
params or as frozen constants.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from srtc import autodiff as ad
from srtc.autodiff import Graph, Tensor

ACTIVATIONS = ("relu", "tanh", "identity")

DEFAULT_HIDDEN = 128
DEFAULT_REPR = 64
DEFAULT_NOISE = 64


@dataclass
class Layer:
    w: np.ndarray  # (fan_in, fan_out)
    b: np.ndarray  # (1, fan_out)
    activation: str


BoundLayer = tuple[Tensor, Tensor, str]


class Mlp:
    """Chain of fully connected layers with named parameters."""

    def __init__(self, layers: list[Layer]):
        self.layers = layers

    @property
    def in_width(self) -> int:
        return self.layers[0].w.shape[0]

    @property
    def out_width(self) -> int:
        return self.layers[-1].w.shape[1]

    def params(self, prefix: str = "") -> dict[str, np.ndarray]:
        out = {}
        for i, layer in enumerate(self.layers):
            out[f"{prefix}{i}.w"] = layer.w
            out[f"{prefix}{i}.b"] = layer.b
        return out

    def bind(self, graph: Graph, trainable: bool,
             prefix: str = "") -> list[BoundLayer]:
        bound = []
        for i, layer in enumerate(self.layers):
            if trainable:
                w = graph.param(layer.w, f"{prefix}{i}.w")
                b = graph.param(layer.b, f"{prefix}{i}.b")
            else:
                w = graph.constant(layer.w, f"{prefix}{i}.w")
                b = graph.constant(layer.b, f"{prefix}{i}.b")
            bound.append((w, b, layer.activation))
        return bound

    @staticmethod
    def forward(bound: list[BoundLayer], x: Tensor) -> Tensor:
        z = x
        for w, b, activation in bound:
            a = ad.add(ad.matmul(z, w), b)
            if activation == "relu":
                z = ad.relu(a)
            elif activation == "tanh":
                z = ad.tanh(a)
            elif activation == "identity":
                z = a
            else:
                raise ValueError(f"unsupported activation {activation!r}")
        return z


def _init_layer(rng: np.random.Generator, fan_in: int, fan_out: int,
                activation: str) -> Layer:
    # He scaling for rectified layers, Xavier for the rest.
    if activation == "relu":
        std = np.sqrt(2.0 / fan_in)
    else:
        std = np.sqrt(2.0 / (fan_in + fan_out))
    w = rng.normal(0.0, std, size=(fan_in, fan_out))
    b = np.zeros((1, fan_out))
    return Layer(w, b, activation)


def _check_positive(**dims: int) -> None:
    for name, value in dims.items():
        if value < 1:
            raise ValueError(f"{name} must be >= 1, got {value}")


class SpecializedNetwork:
    """Framer -> Extractor -> Regressor localization network.

    Forward exposes the triple (framer features, extractor
    representation, predicted 2-d location); composing the three blocks
    is bitwise identical to the monolithic forward because the monolith
    is defined as that composition.
    """

    def __init__(self, framer: Mlp, extractor: Mlp, regressor: Mlp):
        if framer.out_width != extractor.in_width:
            raise ValueError("framer/extractor width mismatch")
        if extractor.out_width != regressor.in_width:
            raise ValueError("extractor/regressor width mismatch")
        self.framer = framer
        self.extractor = extractor
        self.regressor = regressor

    @property
    def n_inputs(self) -> int:
        return self.framer.in_width

    @property
    def d_repr(self) -> int:
        return self.extractor.out_width

    def params(self, prefix: str = "") -> dict[str, np.ndarray]:
        out = {}
        out.update(self.framer.params(f"{prefix}framer."))
        out.update(self.extractor.params(f"{prefix}extractor."))
        out.update(self.regressor.params(f"{prefix}regressor."))
        return out

    def bind(self, graph: Graph, trainable: bool, prefix: str = ""):
        return {
            "framer": self.framer.bind(graph, trainable, f"{prefix}framer."),
            "extractor": self.extractor.bind(graph, trainable,
                                             f"{prefix}extractor."),
            "regressor": self.regressor.bind(graph, trainable,
                                             f"{prefix}regressor."),
        }

    @staticmethod
    def forward(bound, x: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        zf = Mlp.forward(bound["framer"], x)
        ze = Mlp.forward(bound["extractor"], zf)
        yhat = Mlp.forward(bound["regressor"], ze)
        return zf, ze, yhat

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Convenience inference path on a throwaway graph."""
        g = Graph()
        bound = self.bind(g, trainable=False)
        _, _, yhat = self.forward(bound, g.constant(x))
        return yhat.data


class Generator:
    """Noise-to-representation surrogate teacher.

    Three fully connected layers; the first is the framer stage (its
    output plays the framer-features role) and the last two form the
    extractor stage emitting the modeled representation.
    """

    def __init__(self, net: Mlp, d_noise: int):
        if len(net.layers) != 3:
            raise ValueError("generator expects exactly three layers")
        self.net = net
        self.d_noise = d_noise

    @property
    def d_repr(self) -> int:
        return self.net.out_width

    @property
    def h(self) -> int:
        return self.net.layers[0].w.shape[1]

    def params(self, prefix: str = "") -> dict[str, np.ndarray]:
        return self.net.params(prefix)

    def bind(self, graph: Graph, trainable: bool, prefix: str = ""):
        return self.net.bind(graph, trainable, prefix)

    @staticmethod
    def forward(bound, noise: Tensor) -> tuple[Tensor, Tensor]:
        zf = Mlp.forward(bound[:1], noise)
        ze = Mlp.forward(bound[1:], zf)
        return zf, ze


class Critic:
    """Wasserstein critic scoring representation batches, one logit per row."""

    def __init__(self, net: Mlp):
        self.net = net

    @property
    def d_repr(self) -> int:
        return self.net.in_width

    def params(self, prefix: str = "") -> dict[str, np.ndarray]:
        return self.net.params(prefix)

    def bind(self, graph: Graph, trainable: bool, prefix: str = ""):
        return self.net.bind(graph, trainable, prefix)

    @staticmethod
    def forward(bound, z: Tensor) -> Tensor:
        return Mlp.forward(bound, z)


class MIEstimator:
    """Global statistic network on (teacher, target) representation pairs."""

    def __init__(self, net: Mlp, d_repr: int):
        self.net = net
        self.d_repr = d_repr

    def params(self, prefix: str = "") -> dict[str, np.ndarray]:
        return self.net.params(prefix)

    def bind(self, graph: Graph, trainable: bool, prefix: str = ""):
        return self.net.bind(graph, trainable, prefix)

    @staticmethod
    def forward(bound, z_teacher: Tensor, z_target: Tensor) -> Tensor:
        pair = ad.concat([z_teacher, z_target], axis=1)
        return Mlp.forward(bound, pair)


def build_specialized(n_anchors: int, h: int = DEFAULT_HIDDEN,
                      d_repr: int = DEFAULT_REPR,
                      seed: int = 0) -> SpecializedNetwork:
    _check_positive(n_anchors=n_anchors, h=h, d_repr=d_repr)
    rng = np.random.default_rng(seed)
    framer = Mlp([_init_layer(rng, n_anchors, h, "relu")])
    extractor = Mlp([_init_layer(rng, h, h, "relu"),
                     _init_layer(rng, h, d_repr, "relu")])
    regressor = Mlp([_init_layer(rng, d_repr, 2, "identity")])
    return SpecializedNetwork(framer, extractor, regressor)


def build_generator(d_noise: int = DEFAULT_NOISE, h: int = DEFAULT_HIDDEN,
                    d_repr: int = DEFAULT_REPR, seed: int = 0) -> Generator:
    _check_positive(d_noise=d_noise, h=h, d_repr=d_repr)
    rng = np.random.default_rng(seed)
    net = Mlp([_init_layer(rng, d_noise, h, "relu"),
               _init_layer(rng, h, h, "relu"),
               _init_layer(rng, h, d_repr, "identity")])
    return Generator(net, d_noise)


def build_critic(d_repr: int = DEFAULT_REPR, h: int = DEFAULT_HIDDEN,
                 seed: int = 0) -> Critic:
    _check_positive(d_repr=d_repr, h=h)
    rng = np.random.default_rng(seed)
    net = Mlp([_init_layer(rng, d_repr, h, "relu"),
               _init_layer(rng, h, h, "relu"),
               _init_layer(rng, h, 1, "identity")])
    return Critic(net)


def build_mi_estimator(d_repr: int = DEFAULT_REPR, h: int = DEFAULT_HIDDEN,
                       seed: int = 0) -> MIEstimator:
    _check_positive(d_repr=d_repr, h=h)
    rng = np.random.default_rng(seed)
    net = Mlp([_init_layer(rng, 2 * d_repr, h, "relu"),
               _init_layer(rng, h, h, "relu"),
               _init_layer(rng, h, 1, "identity")])
    return MIEstimator(net, d_repr)


def mlp_from_tensors(tensors: dict[str, np.ndarray], prefix: str,
                     activations: list[str]) -> Mlp:
    """Rebuild an Mlp from checkpoint tensors named '<prefix><i>.w/.b'."""
    layers = []
    for i, act in enumerate(activations):
        try:
            w, b = tensors[f"{prefix}{i}.w"], tensors[f"{prefix}{i}.b"]
        except KeyError as err:
            raise ValueError(f"missing tensor {err.args[0]!r}") from None
        layers.append(Layer(w, b, act))
    return Mlp(layers)


def ensure_same_repr(target_d_repr: int, *nets) -> None:
    """Reject any network whose representation width differs from the
    target's; every teacher must live in the same dimensional space."""
    for net in nets:
        if net.d_repr != target_d_repr:
            raise ValueError(
                f"representation width mismatch: expected {target_d_repr}, "
                f"got {net.d_repr}")
