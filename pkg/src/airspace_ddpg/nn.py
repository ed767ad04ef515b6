"""Small fully-connected networks with hand-written backpropagation.

Inputs are batched row-wise: ``x`` has shape ``(batch, n_in)``.  Hidden
layers use ReLU; the output is either linear (critic) or ``0.3g * tanh``
(actor), so actor outputs are always admissible accelerations.
"""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass

import numpy as np

from .airspace import MAX_ACCEL

LINEAR = "linear"
TANH_SCALED = "tanh_scaled"
ACTIVATIONS = (LINEAR, TANH_SCALED)

MAGIC = b"ASMLP"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Malformed, truncated or incompatible parameter file."""


def _pack(arrays) -> tuple[np.ndarray, list[np.ndarray]]:
    """Copy ``arrays`` into one flat buffer; return it and views shaped like the inputs."""
    flat = np.concatenate([np.asarray(a, dtype=np.float64).ravel() for a in arrays])
    return flat, _views(flat, [a.shape for a in arrays])


def _views(flat: np.ndarray, shapes) -> list[np.ndarray]:
    views, pos = [], 0
    for shape in shapes:
        n = int(np.prod(shape))
        views.append(flat[pos:pos + n].reshape(shape))
        pos += n
    return views


class Mlp:
    """ReLU network; all parameters are views into the single vector ``flat``."""

    def __init__(self, layer_sizes, weights, biases, output_activation: str = LINEAR,
                 output_scale: float = MAX_ACCEL):
        if output_activation not in ACTIVATIONS:
            raise ValueError(f"unknown output activation {output_activation!r}")
        self.layer_sizes = [int(n) for n in layer_sizes]
        if len(weights) != len(self.layer_sizes) - 1 or len(biases) != len(weights):
            raise ValueError("need one weight matrix and bias vector per layer")
        for i, (w, b) in enumerate(zip(weights, biases)):
            if w.shape != (self.layer_sizes[i], self.layer_sizes[i + 1]) or b.shape != (w.shape[1],):
                raise ValueError(f"layer {i} parameter shapes do not chain with {self.layer_sizes}")
        self.flat, views = _pack([*weights, *biases])
        self.weights, self.biases = views[:len(weights)], views[len(weights):]
        self.output_activation = output_activation
        self.output_scale = float(output_scale)

    @property
    def params(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def copy(self) -> "Mlp":
        return Mlp(self.layer_sizes, self.weights, self.biases, self.output_activation,
                   self.output_scale)

    def same_architecture(self, other: "Mlp") -> bool:
        return (self.layer_sizes == other.layer_sizes
                and self.output_activation == other.output_activation)

    def __call__(self, x):
        return forward(self, x)[0]

    def __repr__(self):
        return f"Mlp({self.layer_sizes}, {self.output_activation})"


@dataclass
class Cache:
    inputs: list[np.ndarray]  # input to each layer (post-activation of previous)
    pre: list[np.ndarray]     # pre-activation of each layer
    output: np.ndarray


class GradientSet:
    """Parameter gradients laid out exactly like the owning network's ``flat``."""

    def __init__(self, weights, biases, input_gradient=None):
        self.flat, views = _pack([*weights, *biases])
        self.weights, self.biases = views[:len(weights)], views[len(weights):]
        self.input_gradient = input_gradient

    @classmethod
    def zeros_like(cls, net: Mlp) -> "GradientSet":
        g = cls.__new__(cls)
        g.flat = np.zeros_like(net.flat)
        k = len(net.weights)
        views = _views(g.flat, [p.shape for p in net.params])
        g.weights, g.biases, g.input_gradient = views[:k], views[k:], None
        return g

    @property
    def params(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]


def init_random(layer_sizes, rng: np.random.Generator, output_activation: str = LINEAR) -> Mlp:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    sizes = [int(n) for n in layer_sizes]
    if len(sizes) < 2:
        raise ValueError("need at least an input and an output layer")
    if min(sizes) < 1:
        raise ValueError(f"zero-width layer in {sizes}")
    weights, biases = [], []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(n_in)
        weights.append(rng.uniform(-bound, bound, size=(n_in, n_out)))
        biases.append(np.zeros(n_out))
    return Mlp(sizes, weights, biases, output_activation)


def forward(net: Mlp, x) -> tuple[np.ndarray, Cache]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    h = x.reshape(1, -1) if single else x
    if h.shape[1] != net.layer_sizes[0]:
        raise ValueError(f"input width {h.shape[1]} != {net.layer_sizes[0]}")
    inputs, pre = [], []
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        inputs.append(h)
        z = h @ w + b
        pre.append(z)
        if i < last:
            h = np.maximum(z, 0.0)
        elif net.output_activation == TANH_SCALED:
            h = net.output_scale * np.tanh(z)
        else:
            h = z
    out = h[0] if single else h
    return out, Cache(inputs, pre, h)


def backward(net: Mlp, cache: Cache, output_gradient, need_input: bool = True) -> GradientSet:
    """Reverse-mode gradients of ``sum(output * output_gradient)``.

    ``input_gradient`` is left as None when ``need_input`` is false.
    """
    g = np.asarray(output_gradient, dtype=np.float64)
    if g.ndim == 1:
        g = g.reshape(1, -1)
    if g.shape != cache.output.shape or len(cache.pre) != len(net.weights):
        raise ValueError("cache does not match this network / gradient shape")
    last = len(net.weights) - 1
    if net.output_activation == TANH_SCALED:
        g = g * (net.output_scale - cache.output ** 2 / net.output_scale)
    grads = GradientSet.zeros_like(net)
    for i in range(last, -1, -1):
        if i < last:
            g = g * (cache.pre[i] > 0.0)
        np.matmul(cache.inputs[i].T, g, out=grads.weights[i])
        np.sum(g, axis=0, out=grads.biases[i])
        if i > 0 or need_input:
            g = g @ net.weights[i].T
    grads.input_gradient = g if need_input else None
    return grads


def apply_gradients(net: Mlp, grads: GradientSet, learning_rate: float) -> Mlp:
    """In-place plain gradient descent step; returns ``net``."""
    if grads.flat.shape != net.flat.shape:
        raise ValueError("gradient shape does not match parameters")
    if not np.all(np.isfinite(grads.flat)):
        raise FloatingPointError("non-finite gradient")
    net.flat -= learning_rate * grads.flat
    return net


class Adam:
    """Adam moment estimates for one network."""

    def __init__(self, net: Mlp, learning_rate: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = learning_rate, beta1, beta2, eps
        self.m = np.zeros_like(net.flat)
        self.v = np.zeros_like(net.flat)
        self.t = 0

    def step(self, net: Mlp, grads: GradientSet) -> Mlp:
        d = grads.flat
        if not np.all(np.isfinite(d)):
            raise FloatingPointError("non-finite gradient")
        self.t += 1
        step = self.lr * np.sqrt(1.0 - self.b2 ** self.t) / (1.0 - self.b1 ** self.t)
        self.m *= self.b1
        self.m += (1.0 - self.b1) * d
        self.v *= self.b2
        self.v += (1.0 - self.b2) * (d * d)
        net.flat -= step * self.m / (np.sqrt(self.v) + self.eps)
        return net


def soft_update(target: Mlp, source: Mlp, tau: float) -> Mlp:
    """target <- tau * source + (1 - tau) * target, in place."""
    if not target.same_architecture(source):
        raise ValueError("soft_update between different architectures")
    if tau == 1.0:
        target.flat[...] = source.flat
    else:
        target.flat *= 1.0 - tau
        target.flat += tau * source.flat
    return target


# Checkpoint layout (little endian):
#   magic "ASMLP", u16 version, u16 activation-tag length, tag bytes,
#   f64 output scale, u32 n_layers, u32 sizes[n_layers],
#   then every weight matrix (row-major f64), then every bias vector.

def dump_mlp(net: Mlp) -> bytes:
    tag = net.output_activation.encode()
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<HH", FORMAT_VERSION, len(tag)))
    buf.write(tag)
    buf.write(struct.pack("<d", net.output_scale))
    buf.write(struct.pack("<I", len(net.layer_sizes)))
    buf.write(struct.pack(f"<{len(net.layer_sizes)}I", *net.layer_sizes))
    for w in net.weights:
        buf.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
    for b in net.biases:
        buf.write(np.ascontiguousarray(b, dtype="<f8").tobytes())
    return buf.getvalue()


def _take(buf: memoryview, pos: int, n: int) -> tuple[bytes, int]:
    if pos + n > len(buf):
        raise CheckpointError("truncated parameter block")
    return bytes(buf[pos:pos + n]), pos + n


def parse_mlp(data: bytes, pos: int = 0, expect_sizes=None) -> tuple[Mlp, int]:
    """Decode one network starting at ``pos``; returns it and the end offset."""
    buf = memoryview(data)
    magic, pos = _take(buf, pos, len(MAGIC))
    if magic != MAGIC:
        raise CheckpointError("bad magic; not a network parameter block")
    raw, pos = _take(buf, pos, 4)
    version, tag_len = struct.unpack("<HH", raw)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported parameter format version {version}")
    tag, pos = _take(buf, pos, tag_len)
    activation = tag.decode()
    if activation not in ACTIVATIONS:
        raise CheckpointError(f"unknown activation tag {activation!r}")
    raw, pos = _take(buf, pos, 8)
    (scale,) = struct.unpack("<d", raw)
    raw, pos = _take(buf, pos, 4)
    (n,) = struct.unpack("<I", raw)
    raw, pos = _take(buf, pos, 4 * n)
    sizes = list(struct.unpack(f"<{n}I", raw))
    if expect_sizes is not None and sizes != list(expect_sizes):
        raise CheckpointError(f"shape mismatch: file has layers {sizes}, expected {list(expect_sizes)}")
    weights, biases = [], []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        raw, pos = _take(buf, pos, 8 * n_in * n_out)
        weights.append(np.frombuffer(raw, dtype="<f8").reshape(n_in, n_out).astype(np.float64))
    for n_out in sizes[1:]:
        raw, pos = _take(buf, pos, 8 * n_out)
        biases.append(np.frombuffer(raw, dtype="<f8").astype(np.float64))
    return Mlp(sizes, weights, biases, activation, scale), pos
