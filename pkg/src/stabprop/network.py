"""Small feedforward networks: evaluation, Jacobians, initialization, JSON I/O.

Layers act on row vectors, ``y = x @ W.T + b``, and accept a leading batch
axis.  Parameters may be ndarrays (inference) or :class:`~stabprop.autodiff.Tensor`
objects (training); see :meth:`Network.with_params`.

JSON schema (``format: "stabprop-network/1"``)::

    {"format": "stabprop-network/1",
     "layers": [{"type": "dense", "weights": [[...], ...], "bias": [...]},
                {"type": "activation", "kind": "relu"},
                {"type": "activation", "kind": "leaky_relu", "slope": 0.01},
                {"type": "maxpool", "group_size": 2}]}

A PNN file uses ``format: "stabprop-pnn/1"`` with keys ``trunk``,
``mean_head`` and ``logvar_head``, each holding a ``layers`` list.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence, Union

import numpy as np

from . import autodiff as ad
from .errors import DimMismatch

ACTIVATIONS = ("relu", "leaky_relu", "sigmoid", "silu", "gelu")
NETWORK_FORMAT = "stabprop-network/1"
PNN_FORMAT = "stabprop-pnn/1"
LOGVAR_MIN = -60.0
LOGVAR_MAX = 30.0
INITS = ("kaiming_uniform", "fan_in_uniform")


@dataclass(frozen=True)
class Dense:
    weights: Any  # (m, n)
    bias: Any  # (m,)

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class Activation:
    kind: str
    slope: float = 0.01

    def __post_init__(self):
        if self.kind not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.kind!r}")
        if self.kind == "leaky_relu" and not 0.0 < self.slope < 1.0:
            raise ValueError("LeakyReLU slope must lie in (0, 1)")


@dataclass(frozen=True)
class MaxPool:
    group_size: int

    def __post_init__(self):
        if self.group_size < 1:
            raise ValueError("group_size must be positive")


Layer = Union[Dense, Activation, MaxPool]


def activation_value(kind: str, x, slope: float = 0.01):
    if kind == "relu":
        return ad.relu(x)
    if kind == "leaky_relu":
        return ad.leaky_relu(x, slope)
    if kind == "sigmoid":
        return ad.sigmoid(x)
    if kind == "silu":
        return x * ad.sigmoid(x)
    if kind == "gelu":
        return x * ad.normal_cdf(x)
    raise ValueError(kind)


def activation_slope(kind: str, x, slope: float = 0.01):
    """Derivative of the activation at ``x``; ReLU-family kinks take slope 1."""
    if kind == "relu":
        return (ad.value(x) >= 0).astype(float)
    if kind == "leaky_relu":
        return np.where(ad.value(x) >= 0, 1.0, slope)
    if kind == "sigmoid":
        s = ad.sigmoid(x)
        return s * (1.0 - s)
    if kind == "silu":
        s = ad.sigmoid(x)
        return s * (1.0 + x * (1.0 - s))
    if kind == "gelu":
        return ad.normal_cdf(x) + x * ad.normal_pdf(x)
    raise ValueError(kind)


@dataclass(frozen=True)
class Network:
    layers: tuple = field(default_factory=tuple)

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        dims = [l for l in layers if isinstance(l, Dense)]
        if not dims:
            raise ValueError("network needs at least one Dense layer")
        width = dims[0].in_dim
        self_in = width
        for layer in layers:
            if isinstance(layer, Dense):
                if layer.in_dim != width:
                    raise DimMismatch(f"Dense expects width {layer.in_dim}, got {width}")
                if tuple(layer.bias.shape) != (layer.out_dim,):
                    raise DimMismatch("bias length must equal output rows")
                width = layer.out_dim
            elif isinstance(layer, MaxPool):
                if width % layer.group_size:
                    raise DimMismatch(f"MaxPool group {layer.group_size} does not divide width {width}")
                width //= layer.group_size
        object.__setattr__(self, "_dims", (self_in, width))

    @property
    def input_dim(self) -> int:
        return self._dims[0]

    @property
    def output_dim(self) -> int:
        return self._dims[1]

    @property
    def dense_layers(self) -> list:
        return [l for l in self.layers if isinstance(l, Dense)]

    def params(self) -> list:
        out = []
        for l in self.dense_layers:
            out.extend([l.weights, l.bias])
        return out

    def with_params(self, params: Sequence) -> "Network":
        """Copy of this network with Dense parameters replaced in order."""
        it = iter(params)
        layers = []
        for l in self.layers:
            if isinstance(l, Dense):
                layers.append(Dense(next(it), next(it)))
            else:
                layers.append(l)
        return Network(tuple(layers))

    def __call__(self, x):
        return forward(self, x)


def _check_input(net: Network, x):
    if ad.value(x).shape[-1:] != (net.input_dim,):
        raise DimMismatch(f"input has shape {ad.value(x).shape}, network expects {net.input_dim}")


def apply_layer(layer: Layer, x):
    if isinstance(layer, Dense):
        return x @ ad.swapaxes(layer.weights, -1, -2) + layer.bias
    if isinstance(layer, Activation):
        return activation_value(layer.kind, x, layer.slope)
    idx = ad.group_max_index(x, layer.group_size)
    return ad.group_take(x, idx, layer.group_size)


def forward(net: Network, x):
    _check_input(net, x)
    h = x if ad.is_tensor(x) else np.asarray(x, dtype=float)
    for layer in net.layers:
        h = apply_layer(layer, h)
    return h


def _forward_cache(net: Network, x: np.ndarray):
    """Forward pass keeping what the Jacobian sweeps need per layer."""
    cache = []
    h = x
    for layer in net.layers:
        if isinstance(layer, Activation):
            cache.append(activation_slope(layer.kind, h, layer.slope))
        elif isinstance(layer, MaxPool):
            cache.append(ad.group_max_index(h, layer.group_size))
        else:
            cache.append(None)
        h = apply_layer(layer, h)
    return h, cache


def jacobian(net: Network, x, mode: str = "auto") -> np.ndarray:
    """Jacobian ``d forward / d x`` of shape ``(..., output_dim, input_dim)``.

    ``mode="auto"`` sweeps forward (one tangent per input) when
    ``input_dim <= output_dim`` and backward (one cotangent per output)
    otherwise, so the cost is about ``min(k_in, k_out)`` evaluations.
    """
    x = np.asarray(x, dtype=float)
    _check_input(net, x)
    if mode == "auto":
        mode = "forward" if net.input_dim <= net.output_dim else "reverse"
    batch = x.shape[:-1]
    _, cache = _forward_cache(net, x)
    if mode == "forward":
        # rows index input directions: T has shape (..., k_in, width)
        t = np.broadcast_to(np.eye(net.input_dim), batch + (net.input_dim, net.input_dim))
        for layer, c in zip(net.layers, cache):
            if isinstance(layer, Dense):
                t = t @ layer.weights.T
            elif isinstance(layer, Activation):
                t = t * c[..., None, :]
            else:
                idx = np.broadcast_to(c[..., None, :], t.shape[:-1] + c.shape[-1:])
                t = ad.group_take(t, idx, layer.group_size)
        return np.swapaxes(t, -1, -2)
    if mode == "reverse":
        # rows index output components: C has shape (..., k_out, width)
        cot = np.broadcast_to(np.eye(net.output_dim), batch + (net.output_dim, net.output_dim))
        for layer, c in zip(reversed(net.layers), reversed(cache)):
            if isinstance(layer, Dense):
                cot = cot @ layer.weights
            elif isinstance(layer, Activation):
                cot = cot * c[..., None, :]
            else:
                g = layer.group_size
                n_groups = cot.shape[-1]
                out = np.zeros(cot.shape[:-1] + (n_groups, g))
                idx = np.broadcast_to(c[..., None, :, None], cot.shape + (1,))
                np.put_along_axis(out, idx, cot[..., None], axis=-1)
                cot = out.reshape(cot.shape[:-1] + (n_groups * g,))
        return np.array(cot)
    raise ValueError(f"unknown mode {mode!r}")


def init_params(
    sizes: Sequence[int], rng, activation: str = "relu", slope: float = 0.01, init: str = "kaiming_uniform"
) -> Network:
    """MLP with ``activation`` between Dense layers of the given ``sizes``.

    ``init="kaiming_uniform"``: weights ``U(-sqrt(6/fan_in), sqrt(6/fan_in))``,
    zero biases.  ``init="fan_in_uniform"``: weights and biases
    ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))``, the usual framework default for
    linear layers.
    """
    if len(sizes) < 2:
        raise ValueError("need at least input and output sizes")
    if init not in INITS:
        raise ValueError(f"unknown init {init!r}")
    layers = []
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        if init == "kaiming_uniform":
            bound = np.sqrt(6.0 / n_in)
            W, b = rng.uniform(-bound, bound, (n_out, n_in)), np.zeros(n_out)
        else:
            bound = 1.0 / np.sqrt(n_in)
            W, b = rng.uniform(-bound, bound, (n_out, n_in)), rng.uniform(-bound, bound, n_out)
        layers.append(Dense(W, b))
        if i < len(sizes) - 2:
            layers.append(Activation(activation, slope))
    return Network(tuple(layers))


def layer_to_dict(layer: Layer) -> dict:
    if isinstance(layer, Dense):
        return {
            "type": "dense",
            "weights": np.asarray(layer.weights).tolist(),
            "bias": np.asarray(layer.bias).tolist(),
        }
    if isinstance(layer, Activation):
        d = {"type": "activation", "kind": layer.kind}
        if layer.kind == "leaky_relu":
            d["slope"] = layer.slope
        return d
    return {"type": "maxpool", "group_size": layer.group_size}


def layer_from_dict(d: dict) -> Layer:
    kind = d.get("type")
    if kind == "dense":
        return Dense(np.asarray(d["weights"], dtype=float), np.asarray(d["bias"], dtype=float))
    if kind == "activation":
        return Activation(d["kind"], float(d.get("slope", 0.01)))
    if kind == "maxpool":
        return MaxPool(int(d["group_size"]))
    raise ValueError(f"unknown layer type {kind!r}")


def network_to_dict(net: Network) -> dict:
    return {"format": NETWORK_FORMAT, "layers": [layer_to_dict(l) for l in net.layers]}


def network_from_dict(d: dict) -> Network:
    if d.get("format", NETWORK_FORMAT) != NETWORK_FORMAT:
        raise ValueError(f"unsupported network format {d.get('format')!r}")
    return Network(tuple(layer_from_dict(l) for l in d["layers"]))


@dataclass(frozen=True)
class PnnNetwork:
    """Shared trunk with a mean head and a log-variance head."""

    trunk: Network
    mean_head: Network
    logvar_head: Network

    def __post_init__(self):
        for head in (self.mean_head, self.logvar_head):
            if head.input_dim != self.trunk.output_dim:
                raise DimMismatch("head input must match trunk output")
        if self.mean_head.output_dim != self.logvar_head.output_dim:
            raise DimMismatch("heads must have equal output size")

    @property
    def input_dim(self) -> int:
        return self.trunk.input_dim

    @property
    def output_dim(self) -> int:
        return self.mean_head.output_dim

    def mean_network(self) -> Network:
        return Network(self.trunk.layers + self.mean_head.layers)

    def params(self) -> list:
        return self.trunk.params() + self.mean_head.params() + self.logvar_head.params()

    def with_params(self, params: Sequence) -> "PnnNetwork":
        n_t = len(self.trunk.params())
        n_m = len(self.mean_head.params())
        return PnnNetwork(
            self.trunk.with_params(params[:n_t]),
            self.mean_head.with_params(params[n_t : n_t + n_m]),
            self.logvar_head.with_params(params[n_t + n_m :]),
        )

    def predict(self, x):
        """``(mean, variance)`` with variance ``exp(clip(logvar))`` > 0."""
        h = forward(self.trunk, x)
        mu = forward(self.mean_head, h)
        logvar = ad.clip(forward(self.logvar_head, h), LOGVAR_MIN, LOGVAR_MAX)
        return mu, ad.exp(logvar)


def init_pnn(
    sizes: Sequence[int], out_dim: int, rng, activation: str = "relu", init: str = "kaiming_uniform"
) -> PnnNetwork:
    """PNN whose trunk is an MLP over ``sizes`` (ending in an activation)."""
    trunk = init_params(sizes, rng, activation, init=init)
    trunk = Network(trunk.layers + (Activation(activation),))
    width = sizes[-1]
    mean_head = init_params([width, out_dim], rng, init=init)
    logvar_head = init_params([width, out_dim], rng, init=init)
    return PnnNetwork(trunk, mean_head, logvar_head)


def pnn_to_dict(pnn: PnnNetwork) -> dict:
    return {
        "format": PNN_FORMAT,
        "trunk": {"layers": [layer_to_dict(l) for l in pnn.trunk.layers]},
        "mean_head": {"layers": [layer_to_dict(l) for l in pnn.mean_head.layers]},
        "logvar_head": {"layers": [layer_to_dict(l) for l in pnn.logvar_head.layers]},
    }


def pnn_from_dict(d: dict) -> PnnNetwork:
    def net(key):
        return Network(tuple(layer_from_dict(l) for l in d[key]["layers"]))

    return PnnNetwork(net("trunk"), net("mean_head"), net("logvar_head"))


def save(model, path) -> None:
    d = pnn_to_dict(model) if isinstance(model, PnnNetwork) else network_to_dict(model)
    Path(path).write_text(json.dumps(d))


def load(path):
    d = json.loads(Path(path).read_text())
    if d.get("format") == PNN_FORMAT:
        return pnn_from_dict(d)
    return network_from_dict(d)
