"""Layers, the LeNet-style feature extractors, and parameter checkpoints."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor

BN_MOMENTUM = 0.1
BN_EPS = 1e-5


@dataclass(frozen=True)
class LayerSpec:
    kind: str  # conv2d | linear | batchnorm | maxpool | activation | flatten
    units: int = 0
    kernel: int = 0
    stride: int = 1
    padding: int = 0
    activation: str = ""
    bias: bool = True


def conv(units, kernel, padding, bias=True):
    return LayerSpec("conv2d", units=units, kernel=kernel, padding=padding, bias=bias)


def dense(units, bias=True):
    return LayerSpec("linear", units=units, bias=bias)


def bn(affine=True):
    # ``bias`` doubles as the affine flag: a learned shift is a bias term
    return LayerSpec("batchnorm", bias=affine)


def act(kind):
    return LayerSpec("activation", activation=kind)


def pool(kernel=2):
    return LayerSpec("maxpool", kernel=kernel, stride=kernel)


FLATTEN = LayerSpec("flatten")


def _kaiming_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    gain = math.sqrt(2.0 / (1.0 + T.LEAKY_SLOPE**2))
    bound = gain * math.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Layer:
    def forward(self, x: Tensor, train: bool) -> Tensor:
        raise NotImplementedError

    def params(self) -> list[tuple[str, Tensor]]:
        return []

    def buffers(self) -> list[tuple[str, np.ndarray]]:
        return []


class Conv2d(Layer):
    def __init__(self, in_ch, out_ch, kernel, padding, bias, rng):
        fan_in = in_ch * kernel * kernel
        self.weight = Tensor(_kaiming_uniform(rng, (out_ch, in_ch, kernel, kernel), fan_in), requires_grad=True)
        self.bias = Tensor(np.zeros(out_ch), requires_grad=True) if bias else None
        self.padding = padding

    def forward(self, x, train):
        return T.conv2d(x, self.weight, self.bias, padding=self.padding)

    def params(self):
        out = [("weight", self.weight)]
        if self.bias is not None:
            out.append(("bias", self.bias))
        return out


class Linear(Layer):
    def __init__(self, n_in, n_out, bias, rng):
        self.weight = Tensor(_kaiming_uniform(rng, (n_out, n_in), n_in), requires_grad=True)
        self.bias = Tensor(np.zeros(n_out), requires_grad=True) if bias else None

    def forward(self, x, train):
        return T.linear(x, self.weight, self.bias)

    def params(self):
        out = [("weight", self.weight)]
        if self.bias is not None:
            out.append(("bias", self.bias))
        return out


class BatchNorm(Layer):
    """Batch normalisation over channels (4D input) or features (2D input)."""

    def __init__(self, n, affine=True, momentum=BN_MOMENTUM, eps=BN_EPS):
        self.gamma = Tensor(np.ones(n), requires_grad=True) if affine else None
        self.beta = Tensor(np.zeros(n), requires_grad=True) if affine else None
        self.running_mean = np.zeros(n)
        self.running_var = np.ones(n)
        self.momentum = momentum
        self.eps = eps

    def forward(self, x, train):
        if train:
            out, mu, var = T.batch_norm(x, self.gamma, self.beta, self.eps)
            n = x.size // x.shape[1]
            unbiased = var * n / max(n - 1, 1)
            m = self.momentum
            self.running_mean = (1.0 - m) * self.running_mean + m * mu
            self.running_var = (1.0 - m) * self.running_var + m * unbiased
            return out
        inv = 1.0 / np.sqrt(self.running_var + self.eps)
        out = T.affine_channels(x, inv, -self.running_mean * inv)
        if self.gamma is not None:
            shape = (1, -1) if x.ndim == 2 else (1, -1, 1, 1)
            out = out * self.gamma.reshape(shape) + self.beta.reshape(shape)
        return out

    def params(self):
        if self.gamma is None:
            return []
        return [("gamma", self.gamma), ("beta", self.beta)]

    def buffers(self):
        return [("running_mean", self.running_mean), ("running_var", self.running_var)]

    def set_buffer(self, name, value):
        setattr(self, name, np.array(value, dtype=np.float64))


class MaxPool2d(Layer):
    def __init__(self, kernel):
        self.kernel = kernel

    def forward(self, x, train):
        return T.max_pool2d(x, self.kernel)


class Activation(Layer):
    _fns = {"leaky_relu": T.leaky_relu, "relu": T.relu, "sigmoid": T.sigmoid}

    def __init__(self, kind):
        if kind not in self._fns:
            raise ValueError(f"unknown activation {kind!r}")
        self.kind = kind

    def forward(self, x, train):
        return self._fns[self.kind](x)


class Flatten(Layer):
    def forward(self, x, train):
        return T.flatten(x)


def output_shape(spec: LayerSpec, in_shape: tuple[int, ...]) -> tuple[int, ...]:
    if spec.kind == "conv2d":
        if len(in_shape) != 3:
            raise ShapeError("conv2d", in_shape)
        c, h, w = in_shape
        ho = (h + 2 * spec.padding - spec.kernel) // spec.stride + 1
        wo = (w + 2 * spec.padding - spec.kernel) // spec.stride + 1
        if ho < 1 or wo < 1:
            raise ShapeError("conv2d", in_shape)
        return (spec.units, ho, wo)
    if spec.kind == "linear":
        if len(in_shape) != 1:
            raise ShapeError("linear", in_shape)
        return (spec.units,)
    if spec.kind == "maxpool":
        if len(in_shape) != 3:
            raise ShapeError("maxpool", in_shape)
        return (in_shape[0], in_shape[1] // spec.kernel, in_shape[2] // spec.kernel)
    if spec.kind == "flatten":
        return (int(np.prod(in_shape)),)
    return in_shape


def count_parameters(specs: Sequence[LayerSpec], input_shape: tuple[int, ...]) -> int:
    """Number of learned scalars implied by ``specs`` (no network is built)."""
    total = 0
    shape = tuple(input_shape)
    for s in specs:
        if s.kind == "conv2d":
            total += s.units * shape[0] * s.kernel * s.kernel + (s.units if s.bias else 0)
        elif s.kind == "linear":
            total += s.units * shape[0] + (s.units if s.bias else 0)
        elif s.kind == "batchnorm" and s.bias:
            total += 2 * shape[0]
        shape = output_shape(s, shape)
    return total


class Network:
    """A feed-forward stack of layers mapping inputs to ``output_dim`` features."""

    def __init__(self, specs: Sequence[LayerSpec], input_shape: tuple[int, ...], seed: int = 0):
        self.specs = tuple(specs)
        self.input_shape = tuple(input_shape)
        self.training = True
        rng = np.random.default_rng(seed)
        self.layers: list[Layer] = []
        shape = self.input_shape
        for s in self.specs:
            if s.kind == "conv2d":
                layer = Conv2d(shape[0], s.units, s.kernel, s.padding, s.bias, rng)
            elif s.kind == "linear":
                layer = Linear(shape[0], s.units, s.bias, rng)
            elif s.kind == "batchnorm":
                layer = BatchNorm(shape[0], affine=s.bias)
            elif s.kind == "maxpool":
                layer = MaxPool2d(s.kernel)
            elif s.kind == "activation":
                layer = Activation(s.activation)
            elif s.kind == "flatten":
                layer = Flatten()
            else:
                raise ValueError(f"unknown layer kind {s.kind!r}")
            self.layers.append(layer)
            shape = output_shape(s, shape)
        if len(shape) != 1:
            raise ShapeError("network output", shape)
        self.output_dim = shape[0]

    @property
    def mode(self) -> str:
        return "train" if self.training else "eval"

    def train(self) -> Network:
        self.training = True
        return self

    def eval(self) -> Network:
        self.training = False
        return self

    def __call__(self, x) -> Tensor:
        return self.forward(x)

    def forward(self, x) -> Tensor:
        x = T.as_tensor(x)
        if tuple(x.shape[1:]) != self.input_shape:
            raise ShapeError("network input", x.shape, (None, *self.input_shape))
        for layer in self.layers:
            x = layer.forward(x, self.training)
        return x

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return [(f"{i}.{n}", p) for i, layer in enumerate(self.layers) for n, p in layer.params()]

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {n: p.data.copy() for n, p in self.named_parameters()}
        for i, layer in enumerate(self.layers):
            for n, b in layer.buffers():
                state[f"{i}.{n}"] = b.copy()
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        expected = self.state_dict()
        missing = set(expected) - set(state)
        if missing:
            raise KeyError(f"missing tensors in state: {sorted(missing)}")
        for n, p in self.named_parameters():
            if state[n].shape != p.shape:
                raise ShapeError(f"load {n}", state[n].shape, p.shape)
            p.data = np.array(state[n], dtype=np.float64)
        for i, layer in enumerate(self.layers):
            for n, _ in layer.buffers():
                layer.set_buffer(n, state[f"{i}.{n}"])


class ClassifierHead:
    """Linear map r -> 1 followed by a sigmoid."""

    def __init__(self, in_dim: int, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.linear = Linear(in_dim, 1, True, rng)

    def __call__(self, features) -> Tensor:
        logits = self.linear.forward(T.as_tensor(features), True)
        return T.sigmoid(T.reshape(logits, (-1,)))

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.linear.params()]

    def named_parameters(self):
        return [(f"head.{n}", p) for n, p in self.linear.params()]


# -- architectures ---------------------------------------------------------------------
def mnist_specs(bias: bool = True) -> list[LayerSpec]:
    return [
        conv(16, 5, 2, bias), bn(bias), act("leaky_relu"), pool(2),
        conv(32, 5, 2, bias), bn(bias), act("leaky_relu"), pool(2),
        FLATTEN,
        dense(64, bias), bn(bias), act("leaky_relu"),
        dense(32, bias),
    ]  # fmt: skip


def cifar_specs(bias: bool = True) -> list[LayerSpec]:
    return [
        conv(32, 3, 1, bias), bn(bias), act("leaky_relu"), pool(2),
        conv(64, 3, 1, bias), bn(bias), act("leaky_relu"), pool(2),
        conv(128, 3, 1, bias), bn(bias), act("leaky_relu"), pool(2),
        FLATTEN,
        dense(512, bias), bn(bias), act("leaky_relu"),
        dense(256, bias),
    ]  # fmt: skip


def build_mnist_net(input_shape=(1, 28, 28), bias: bool = True, seed: int = 0) -> Network:
    return Network(mnist_specs(bias), input_shape, seed)


def build_cifar_net(input_shape=(3, 32, 32), bias: bool = True, seed: int = 0) -> Network:
    return Network(cifar_specs(bias), input_shape, seed)


def multiscale_specs(bias: bool = True) -> list[LayerSpec]:
    """MNIST-style widths with 3x3 kernels, for the 1x32x32 synthetic suite."""
    return [
        conv(16, 3, 1, bias), bn(bias), act("leaky_relu"), pool(2),
        conv(32, 3, 1, bias), bn(bias), act("leaky_relu"), pool(2),
        FLATTEN,
        dense(64, bias), bn(bias), act("leaky_relu"),
        dense(32, bias),
    ]  # fmt: skip


def build_multiscale_net(input_shape=(1, 32, 32), bias: bool = True, seed: int = 0) -> Network:
    return Network(multiscale_specs(bias), input_shape, seed)


def build_toy_mlp(hidden_dims: Iterable[int] = (32, 32), out_dim: int = 2, bias: bool = True, seed: int = 0) -> Network:
    specs: list[LayerSpec] = []
    for h in hidden_dims:
        specs += [dense(h, bias), act("relu")]
    specs.append(dense(out_dim, bias))
    return Network(specs, (2,), seed)


def without_bias(specs: Sequence[LayerSpec]) -> list[LayerSpec]:
    return [replace(s, bias=False) if s.kind in ("conv2d", "linear", "batchnorm") else s for s in specs]


def forward_features(net: Network, batch) -> Tensor:
    return net.forward(batch)


def forward_prob(net: Network, head: ClassifierHead, batch) -> Tensor:
    return head(net.forward(batch))


# -- checkpoint container -------------------------------------------------------------
MAGIC = b"OEBN"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_tensors(path, tensors: dict[str, np.ndarray]) -> None:
    """Write named float64 arrays to the OEBN container (little-endian)."""
    parts = [MAGIC, struct.pack("<I", VERSION)]
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(np.ascontiguousarray(arr).tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_tensors(path) -> dict[str, np.ndarray]:
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {buf[:4]!r}")
    if len(buf) < 8:
        raise CheckpointError(f"{path}: truncated header")
    (version,) = struct.unpack_from("<I", buf, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    pos = 8
    out: dict[str, np.ndarray] = {}

    def take(n):
        nonlocal pos
        if pos + n > len(buf):
            raise CheckpointError(f"{path}: truncated at byte {pos}")
        chunk = buf[pos : pos + n]
        pos += n
        return chunk

    while pos < len(buf):
        (nlen,) = struct.unpack("<I", take(4))
        name = take(nlen).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        dims = struct.unpack(f"<{rank}Q", take(8 * rank))
        count = int(np.prod(dims)) if rank else 1
        out[name] = np.frombuffer(take(8 * count), dtype="<f8").reshape(dims).astype(np.float64)
    return out


def save_checkpoint(path, net: Network, head: ClassifierHead | None = None) -> None:
    state = net.state_dict()
    if head is not None:
        state.update({n: p.data.copy() for n, p in head.named_parameters()})
    save_tensors(path, state)


def load_checkpoint(path, net: Network, head: ClassifierHead | None = None) -> None:
    state = load_tensors(path)
    net.load_state_dict(state)
    if head is not None:
        for n, p in head.named_parameters():
            p.data = state[n].copy()
