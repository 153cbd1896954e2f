"""Feed-forward feature network topped by a linear hashing layer.

The relaxed code for an input x is u = W^T F(x; theta) + v, where F is a
stack of affine layers with ReLU between them (possibly empty, in which
case F is the identity and the model is a single affine map).  Binary
codes are the elementwise sign of u with sign(0) = -1.  Everything runs
in float64 so gradient tests can use tight tolerances.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Layer",
    "HashModel",
    "ForwardTrace",
    "ModelGrads",
    "FeatureMatrix",
    "init_model",
    "forward",
    "sign_codes",
    "encode",
    "encode_all",
    "backward",
    "sgd_step",
    "save_model",
    "load_model",
    "save_features",
    "load_features",
]

ACTIVATIONS = ("relu", "identity")

MODEL_MAGIC = "pseudohash-model"
MODEL_VERSION = 1
FEATURE_HEADER_RE = re.compile(r"^n=(\d+) d=(\d+)$")


def _as_float_matrix(a, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    return arr


@dataclass
class Layer:
    """One affine feature layer: weight is (fan_in, fan_out)."""

    weight: np.ndarray
    bias: np.ndarray
    activation: str = "relu"

    def __post_init__(self) -> None:
        self.weight = _as_float_matrix(self.weight, "layer weight")
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.bias.ndim != 1 or self.bias.shape[0] != self.weight.shape[1]:
            raise ValueError("layer bias length must match weight fan-out")
        if not np.isfinite(self.bias).all():
            raise ValueError("layer bias contains non-finite values")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class HashModel:
    """Feature layers plus the hashing layer (W, v)."""

    layers: list[Layer]
    W: np.ndarray
    v: np.ndarray
    seed: int = 0

    def __post_init__(self) -> None:
        self.layers = list(self.layers)
        self.W = _as_float_matrix(self.W, "hashing weight")
        self.v = np.asarray(self.v, dtype=np.float64)
        if self.v.ndim != 1 or self.v.shape[0] != self.W.shape[1]:
            raise ValueError("hashing bias length must match code length")
        if not np.isfinite(self.v).all():
            raise ValueError("hashing bias contains non-finite values")
        fan_in = self.layers[0].weight.shape[0] if self.layers else self.W.shape[0]
        for layer in self.layers:
            if layer.weight.shape[0] != fan_in:
                raise ValueError("feature layer shapes do not chain")
            fan_in = layer.weight.shape[1]
        if self.W.shape[0] != fan_in:
            raise ValueError("hashing weight fan-in must match the last feature width")

    @property
    def d(self) -> int:
        return self.layers[0].weight.shape[0] if self.layers else self.W.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.W.shape[0]

    @property
    def k(self) -> int:
        return self.W.shape[1]

    @property
    def hidden_dims(self) -> tuple[int, ...]:
        return tuple(layer.weight.shape[1] for layer in self.layers)

    def param_arrays(self) -> list[np.ndarray]:
        """All trainable arrays in declaration order (used by checkpoints and tests)."""
        arrays: list[np.ndarray] = []
        for layer in self.layers:
            arrays.append(layer.weight)
            arrays.append(layer.bias)
        arrays.append(self.W)
        arrays.append(self.v)
        return arrays


@dataclass
class ForwardTrace:
    """Intermediate values kept from a forward pass for backprop.

    ``activations[0]`` is the input batch and ``activations[-1]`` is the
    feature F(x); ``pre`` holds each feature layer's pre-activation.
    """

    activations: list[np.ndarray]
    pre: list[np.ndarray]
    u: np.ndarray


@dataclass
class ModelGrads:
    """Gradients mirroring HashModel's parameters."""

    layers: list[tuple[np.ndarray, np.ndarray]]
    W: np.ndarray
    v: np.ndarray


def init_model(d: int, hidden_dims, k: int, seed: int) -> HashModel:
    """Seeded initialization: normal weights with scale 1/sqrt(fan_in), zero biases."""
    hidden_dims = tuple(int(h) for h in hidden_dims)
    if d < 1 or k < 1 or any(h < 1 for h in hidden_dims):
        raise ValueError("all layer widths must be positive")
    rng = np.random.default_rng(seed)
    layers: list[Layer] = []
    fan_in = d
    for width in hidden_dims:
        weight = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, width))
        layers.append(Layer(weight, np.zeros(width), "relu"))
        fan_in = width
    W = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, k))
    return HashModel(layers, W, np.zeros(k), seed=seed)


def forward(model: HashModel, x_batch) -> ForwardTrace:
    """Run a batch of feature rows through the network."""
    x = np.asarray(x_batch, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("forward expects a 2-D batch")
    if x.shape[1] != model.d:
        raise ValueError(f"input width {x.shape[1]} does not match model width {model.d}")
    activations = [x]
    pre: list[np.ndarray] = []
    h = x
    for layer in model.layers:
        z = h @ layer.weight + layer.bias
        pre.append(z)
        h = np.maximum(z, 0.0) if layer.activation == "relu" else z
        activations.append(h)
    u = h @ model.W + model.v
    return ForwardTrace(activations, pre, u)


def sign_codes(u) -> np.ndarray:
    """Elementwise sign into {-1, +1}; zero maps to -1."""
    return np.where(np.asarray(u, dtype=np.float64) > 0.0, 1, -1).astype(np.int8)


def encode(model: HashModel, x) -> np.ndarray:
    """Binary code for a single feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("encode expects a single feature vector")
    return sign_codes(forward(model, x[None, :]).u[0])


def encode_all(model: HashModel, X) -> np.ndarray:
    """Binary codes for every row of a feature matrix."""
    return sign_codes(forward(model, X).u)


def backward(model: HashModel, trace: ForwardTrace, grad_u) -> ModelGrads:
    """Chain a gradient at u back onto every parameter.

    The ReLU uses subgradient 0 at exactly 0.  Batch items are summed,
    matching a loss written as a plain sum over the batch.
    """
    g = np.asarray(grad_u, dtype=np.float64)
    if g.shape != trace.u.shape:
        raise ValueError(f"gradient shape {g.shape} does not match u shape {trace.u.shape}")
    feats = trace.activations[-1]
    dW = feats.T @ g
    dv = g.sum(axis=0)
    dh = g @ model.W.T
    layer_grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(model.layers)  # type: ignore[list-item]
    for t in reversed(range(len(model.layers))):
        layer = model.layers[t]
        dz = dh * (trace.pre[t] > 0.0) if layer.activation == "relu" else dh
        layer_grads[t] = (trace.activations[t].T @ dz, dz.sum(axis=0))
        dh = dz @ layer.weight.T
    return ModelGrads(layer_grads, dW, dv)


def sgd_step(model: HashModel, grads: ModelGrads, lr: float) -> None:
    """Plain gradient descent update, in place."""
    if lr <= 0.0:
        raise ValueError("learning rate must be positive")
    for layer, (dw, db) in zip(model.layers, grads.layers):
        layer.weight -= lr * dw
        layer.bias -= lr * db
    model.W -= lr * grads.W
    model.v -= lr * grads.v


def save_model(model: HashModel, path: str) -> None:
    """Checkpoint: one text header line, then parameters as little-endian float64."""
    hidden = ",".join(str(w) for w in model.hidden_dims) or "-"
    header = (
        f"{MODEL_MAGIC} v{MODEL_VERSION} d={model.d} hidden={hidden} "
        f"k={model.k} seed={model.seed}\n"
    )
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(header.encode("ascii"))
        for arr in model.param_arrays():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    os.replace(tmp, path)


_MODEL_HEADER_RE = re.compile(
    rf"^{MODEL_MAGIC} v(\d+) d=(\d+) hidden=([0-9,]+|-) k=(\d+) seed=(-?\d+)$"
)


def load_model(path: str) -> HashModel:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace").rstrip("\n")
        m = _MODEL_HEADER_RE.match(header)
        if m is None:
            raise ValueError(f"{path}: not a model checkpoint (bad header)")
        version = int(m.group(1))
        if version != MODEL_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        d = int(m.group(2))
        hidden = tuple(int(h) for h in m.group(3).split(",")) if m.group(3) != "-" else ()
        k = int(m.group(4))
        seed = int(m.group(5))
        payload = fh.read()
    shapes: list[tuple[int, ...]] = []
    fan_in = d
    for width in hidden:
        shapes.append((fan_in, width))
        shapes.append((width,))
        fan_in = width
    shapes.append((fan_in, k))
    shapes.append((k,))
    expected = sum(int(np.prod(s)) for s in shapes) * 8
    if len(payload) != expected:
        raise ValueError(f"{path}: expected {expected} parameter bytes, found {len(payload)}")
    arrays: list[np.ndarray] = []
    offset = 0
    for shape in shapes:
        count = int(np.prod(shape))
        arrays.append(np.frombuffer(payload, dtype="<f8", count=count, offset=offset).reshape(shape).copy())
        offset += count * 8
    layers = [Layer(arrays[2 * t], arrays[2 * t + 1], "relu") for t in range(len(hidden))]
    return HashModel(layers, arrays[-2], arrays[-1], seed=seed)


@dataclass
class FeatureMatrix:
    """Float feature rows aligned with item ids."""

    ids: list[str]
    x: np.ndarray

    def __post_init__(self) -> None:
        self.ids = list(self.ids)
        self.x = np.asarray(self.x, dtype=np.float64)
        if self.x.ndim != 2:
            raise ValueError("features must form a 2-D array")
        if len(self.ids) != self.x.shape[0]:
            raise ValueError("id count does not match feature row count")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("item ids must be unique")
        if not np.isfinite(self.x).all():
            raise ValueError("features contain non-finite values")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]


def save_features(path: str, features: FeatureMatrix) -> None:
    """Feature file: 'n=<n> d=<d>' header, id table, then raw little-endian float64 rows."""
    header = f"n={features.n} d={features.d}\n"
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(header.encode("ascii"))
        for item_id in features.ids:
            fh.write(f"{item_id}\n".encode("utf-8"))
        fh.write(np.ascontiguousarray(features.x, dtype="<f8").tobytes())
    os.replace(tmp, path)


def load_features(path: str) -> FeatureMatrix:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace").rstrip("\n")
        m = FEATURE_HEADER_RE.match(header)
        if m is None:
            raise ValueError(f"{path}: not a feature file (bad header)")
        n, d = int(m.group(1)), int(m.group(2))
        ids = []
        for i in range(n):
            line = fh.readline()
            if not line.endswith(b"\n"):
                raise ValueError(f"{path}: truncated id table")
            ids.append(line.decode("utf-8").rstrip("\n"))
        payload = fh.read()
    if len(payload) != n * d * 8:
        raise ValueError(f"{path}: expected {n * d * 8} feature bytes, found {len(payload)}")
    x = np.frombuffer(payload, dtype="<f8").reshape(n, d).copy() if n * d else np.zeros((n, d))
    return FeatureMatrix(ids, x)
