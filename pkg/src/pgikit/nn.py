"""Shared point-wise MLPs with hand-written reverse mode, momentum SGD and checkpoints."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidArgumentError

ACTIVATIONS = ("identity", "relu", "sigmoid")
_ACT_TAG = {name: i for i, name in enumerate(ACTIVATIONS)}

CKPT_MAGIC = b"PGNN"
CKPT_VERSION = 1


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "relu"

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if self.weight.ndim != 2 or self.bias.shape[0] != self.weight.shape[0]:
            raise InvalidArgumentError("layer weight must be (out, in) with a matching bias")
        if self.activation not in ACTIVATIONS:
            raise InvalidArgumentError(f"unknown activation {self.activation!r}")

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]


@dataclass
class MlpStack:
    layers: list[Layer] = field(default_factory=list)

    def __post_init__(self):
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_dim != b.in_dim:
                raise InvalidArgumentError(
                    f"layer widths do not chain: {a.out_dim} -> {b.in_dim}"
                )

    @classmethod
    def build(cls, widths, activations, rng: np.random.Generator) -> "MlpStack":
        """He-initialized stack; ``activations`` has one entry per layer."""
        if len(activations) != len(widths) - 1:
            raise InvalidArgumentError("need one activation per layer")
        layers = []
        for n_in, n_out, act in zip(widths[:-1], widths[1:], activations):
            std = np.sqrt(2.0 / n_in) if act == "relu" else np.sqrt(1.0 / n_in)
            layers.append(Layer(rng.normal(0.0, std, (n_out, n_in)), np.zeros(n_out), act))
        return cls(layers)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend((layer.weight, layer.bias))
        return out

    def copy(self) -> "MlpStack":
        return MlpStack([Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers])


def _activate(name: str, x: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(x, 0.0)
    if name == "sigmoid":
        return sigmoid(x)
    return x


def _as_batch(net: MlpStack, xs) -> np.ndarray:
    x = np.asarray(xs, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.in_dim:
        raise InvalidArgumentError(
            f"expected inputs of width {net.in_dim}, got shape {x.shape}"
        )
    return x


def mlp_forward_cached(net: MlpStack, xs) -> tuple[np.ndarray, list[np.ndarray]]:
    """Forward pass that also returns every layer's input plus the final output."""
    h = _as_batch(net, xs)
    acts = [h]
    for layer in net.layers:
        h = _activate(layer.activation, h @ layer.weight.T + layer.bias)
        acts.append(h)
    return h, acts


def mlp_forward(net: MlpStack, xs) -> np.ndarray:
    return mlp_forward_cached(net, xs)[0]


def mlp_backward(net: MlpStack, xs, upstream, cache=None):
    """Gradients of ``sum(upstream * mlp_forward(net, xs))``.

    Returns ``(param_grads, input_grads)`` where ``param_grads`` is aligned with
    ``net.parameters()``.
    """
    if cache is None:
        _, cache = mlp_forward_cached(net, xs)
    g = np.asarray(upstream, dtype=np.float64)
    if g.ndim == 1:
        g = g[None, :]
    if g.shape != cache[-1].shape:
        raise InvalidArgumentError(
            f"upstream gradient shape {g.shape} != output shape {cache[-1].shape}"
        )
    grads: list[np.ndarray] = []
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        out = cache[i + 1]
        if layer.activation == "relu":
            g = g * (out > 0)
        elif layer.activation == "sigmoid":
            g = g * out * (1.0 - out)
        grads.append(g.sum(axis=0))
        grads.append(g.T @ cache[i])
        g = g @ layer.weight
    grads.reverse()
    return grads, g


class Momentum:
    """Heavy-ball gradient descent: ``v = mu * v - lr * g; p += v``."""

    def __init__(self, params: list[np.ndarray], learning_rate: float, momentum: float = 0.9):
        if not learning_rate > 0:
            raise InvalidArgumentError("learning_rate must be positive")
        self.params = params
        self.lr = learning_rate
        self.mu = momentum
        self.velocity = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray]) -> None:
        for p, v, g in zip(self.params, self.velocity, grads):
            v *= self.mu
            v -= self.lr * g
            p += v


def write_checkpoint(path, stacks: list[MlpStack]) -> None:
    """Little-endian: magic, u16 version, u32 stack count; per stack a u32 layer
    count then per layer u32 rows, u32 cols, u8 activation tag, f32 weights
    (row-major) and f32 bias."""
    parts = [CKPT_MAGIC, struct.pack("<HI", CKPT_VERSION, len(stacks))]
    for stack in stacks:
        parts.append(struct.pack("<I", len(stack.layers)))
        for layer in stack.layers:
            rows, cols = layer.weight.shape
            parts.append(struct.pack("<IIB", rows, cols, _ACT_TAG[layer.activation]))
            parts.append(layer.weight.astype("<f4").tobytes())
            parts.append(layer.bias.astype("<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_checkpoint(path) -> list[MlpStack]:
    data = Path(path).read_bytes()
    if data[:4] != CKPT_MAGIC:
        raise FormatError("not a pgikit checkpoint (bad magic)")
    pos = 4

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(data):
            raise FormatError("checkpoint truncated")
        vals = struct.unpack_from(fmt, data, pos)
        pos += size
        return vals

    def take_f32(count):
        nonlocal pos
        end = pos + 4 * count
        if end > len(data):
            raise FormatError("checkpoint truncated")
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=pos).astype(np.float64)
        pos = end
        return arr

    version, n_stacks = take("<HI")
    if version != CKPT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    stacks = []
    for _ in range(n_stacks):
        (n_layers,) = take("<I")
        layers = []
        for _ in range(n_layers):
            rows, cols, tag = take("<IIB")
            if tag >= len(ACTIVATIONS):
                raise FormatError(f"unknown activation tag {tag}")
            w = take_f32(rows * cols).reshape(rows, cols)
            b = take_f32(rows)
            layers.append(Layer(w, b, ACTIVATIONS[tag]))
        stacks.append(MlpStack(layers))
    if pos != len(data):
        raise FormatError("trailing bytes after checkpoint payload")
    return stacks
