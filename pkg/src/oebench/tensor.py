"""Dense float64 tensors with reverse-mode automatic differentiation.

Every differentiable primitive returns a new :class:`Tensor` that remembers its
parents and a closure mapping the output gradient to parent gradients.
:func:`backward` linearises the graph into a :class:`Tape` (parents before
children) and replays it in reverse, summing gradients over fan-out.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterator, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DTYPE = np.float64
LEAKY_SLOPE = 0.01

_grad_enabled = True


class ShapeError(ValueError):
    """Raised when a primitive receives operands of incompatible shape."""

    def __init__(self, op: str, *shapes):
        self.op = op
        self.shapes = shapes
        desc = ", ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{op}: incompatible shapes {desc}")


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op")
    # make ``ndarray <op> Tensor`` dispatch to the Tensor's reflected operator
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=DTYPE) if not isinstance(data, np.ndarray) else data
        if arr.dtype != DTYPE:
            arr = arr.astype(DTYPE)
        self.data: np.ndarray = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.op = "leaf"

    # -- introspection -----------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.item())

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def __len__(self) -> int:
        return self.shape[0]

    # -- operator sugar ----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p: float):
        return power(self, p)

    def __getitem__(self, idx):
        return index(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def backward(self) -> None:
        backward(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(data: np.ndarray, parents: Sequence[Tensor], fn, op: str) -> Tensor:
    out = Tensor(data)
    out.op = op
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


# -- tape ------------------------------------------------------------------
class Tape:
    """Recorded operations of one graph in topological order (inputs first)."""

    def __init__(self, nodes: list[Tensor]):
        self.nodes = nodes

    @classmethod
    def from_output(cls, out: Tensor) -> Tape:
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(out, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        return cls(order)

    def __len__(self) -> int:
        return len(self.nodes)

    def __iter__(self):
        return iter(self.nodes)


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every ``requires_grad`` tensor reachable from ``loss``."""
    if loss.size != 1:
        raise ValueError(f"backward: loss must be scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    tape = Tape.from_output(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            # leaves accumulate across calls; interior nodes are overwritten
            node.grad = g if node.grad is None else node.grad + g
            continue
        node.grad = g
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg


# -- elementwise arithmetic ---------------------------------------------------
def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)

    def fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record(a.data + b.data, (a, b), fn, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)

    def fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _record(a.data - b.data, (a, b), fn, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)

    def fn(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _record(a.data * b.data, (a, b), fn, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a, b)

    def fn(g):
        ga = g / b.data
        gb = -g * a.data / (b.data * b.data)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _record(a.data / b.data, (a, b), fn, "div")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _record(-a.data, (a,), lambda g: (-g,), "neg")


def power(a, p: float) -> Tensor:
    a = as_tensor(a)
    p = float(p)

    def fn(g):
        if p == 0.0:
            return (np.zeros_like(a.data),)
        return (g * p * a.data ** (p - 1.0),)

    return _record(a.data**p, (a,), fn, "pow")


def exp(a) -> Tensor:
    a = as_tensor(a)
    y = np.exp(a.data)
    return _record(y, (a,), lambda g: (g * y,), "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    return _record(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    y = np.sqrt(a.data)
    return _record(y, (a,), lambda g: (g * 0.5 / y,), "sqrt")


def absolute(a) -> Tensor:
    a = as_tensor(a)
    return _record(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),), "abs")


def clamp(a, lo: float | None = None, hi: float | None = None) -> Tensor:
    """Clip values; the gradient is zero wherever clipping was active."""
    a = as_tensor(a)
    y = np.clip(a.data, lo, hi)
    inside = np.ones(a.shape, dtype=bool)
    if lo is not None:
        inside &= a.data >= lo
    if hi is not None:
        inside &= a.data <= hi
    return _record(y, (a,), lambda g: (g * inside,), "clamp")


def log1mexp(a, floor: float = 1e-12) -> tuple[Tensor, np.ndarray]:
    """``log(max(1 - exp(-a), floor))`` computed via ``expm1``.

    Returns the result and the boolean mask of entries where the floor was hit.
    """
    a = as_tensor(a)
    inner = -np.expm1(-a.data)
    saturated = inner < floor
    y = np.log(np.where(saturated, floor, inner))

    def fn(g):
        with np.errstate(divide="ignore", over="ignore"):
            d = np.where(saturated, 0.0, 1.0 / np.expm1(np.where(saturated, 1.0, a.data)))
        return (g * d,)

    return _record(y, (a,), fn, "log1mexp"), saturated


# -- activations -------------------------------------------------------------
def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _record(a.data * mask, (a,), lambda g: (g * mask,), "relu")


def leaky_relu(a, slope: float = LEAKY_SLOPE) -> Tensor:
    a = as_tensor(a)
    pos = a.data > 0
    y = a.data * slope
    np.copyto(y, a.data, where=pos)

    def fn(g):
        out = g * slope
        np.copyto(out, g, where=pos)
        return (out,)

    return _record(y, (a,), fn, "leaky_relu")


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    # split by sign so neither branch overflows
    e = np.exp(-np.abs(x))
    y = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _record(y, (a,), lambda g: (g * y * (1.0 - y),), "sigmoid")


# -- reductions ----------------------------------------------------------------
def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    y = a.data.sum(axis=axes, keepdims=keepdims)

    def fn(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _record(np.asarray(y), (a,), fn, "sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    y = a.data.mean(axis=axes, keepdims=keepdims)

    def fn(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, a.shape).copy(),)

    return _record(np.asarray(y), (a,), fn, "mean")


def sq_norm(a) -> Tensor:
    """Row-wise squared L2 norm: (B, r) -> (B,)."""
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError("sq_norm", a.shape)
    y = np.einsum("ij,ij->i", a.data, a.data)
    return _record(y, (a,), lambda g: (2.0 * g[:, None] * a.data,), "sq_norm")


def l2_norm(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError("l2_norm", a.shape)
    y = np.sqrt(np.einsum("ij,ij->i", a.data, a.data))

    def fn(g):
        with np.errstate(invalid="ignore", divide="ignore"):
            d = np.where(y[:, None] > 0, a.data / y[:, None], 0.0)
        return (g[:, None] * d,)

    return _record(y, (a,), fn, "l2_norm")


def l1_norm(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError("l1_norm", a.shape)
    y = np.abs(a.data).sum(axis=1)
    return _record(y, (a,), lambda g: (g[:, None] * np.sign(a.data),), "l1_norm")


# -- shape manipulation ------------------------------------------------------------
def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        y = a.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", a.shape, shape) from None
    return _record(y, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def flatten(a) -> Tensor:
    a = as_tensor(a)
    return reshape(a, (a.shape[0], -1))


def index(a, idx) -> Tensor:
    a = as_tensor(a)
    y = a.data[idx]

    def fn(g):
        out = np.zeros_like(a.data)
        np.add.at(out, idx, g)
        return (out,)

    return _record(np.array(y), (a,), fn, "index")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        y = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError("concat", *[t.shape for t in tensors]) from None
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def fn(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(tensors))
        )

    return _record(y, tensors, fn, "concat")


# -- layers ------------------------------------------------------------------------
def linear(x, weight, bias=None) -> Tensor:
    """``x @ weight.T + bias`` with ``weight`` of shape (out, in)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError("linear", x.shape, weight.shape)
    y = x.data @ weight.data.T
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (weight.shape[0],):
            raise ShapeError("linear", x.shape, weight.shape, bias.shape)
        y = y + bias.data
        parents.append(bias)

    def fn(g):
        grads = [g @ weight.data, g.T @ x.data]
        if bias is not None:
            grads.append(g.sum(axis=0))
        return grads

    return _record(y, parents, fn, "linear")


def conv2d(x, weight, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    """2D cross-correlation, NCHW input and (O, C, kh, kw) weight, via im2col."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise ShapeError("conv2d", x.shape, weight.shape)
    B, C, H, W = x.shape
    O, _, kh, kw = weight.shape
    Hp, Wp = H + 2 * padding, W + 2 * padding
    if Hp < kh or Wp < kw:
        raise ShapeError("conv2d", x.shape, weight.shape)
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    Ho, Wo = win.shape[2], win.shape[3]
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(B * Ho * Wo, C * kh * kw)
    wmat = weight.data.reshape(O, -1)
    y = cols @ wmat.T
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (O,):
            raise ShapeError("conv2d", x.shape, weight.shape, bias.shape)
        y += bias.data
        parents.append(bias)
    y = y.reshape(B, Ho, Wo, O).transpose(0, 3, 1, 2)

    def fn(g):
        gmat = g.transpose(0, 2, 3, 1).reshape(B * Ho * Wo, O)
        gw = (gmat.T @ cols).reshape(weight.shape)
        gx = None
        if x.requires_grad:
            # (C, kh, kw) leading so each kernel offset is one contiguous slab
            gcols = (gmat @ wmat).reshape(B, Ho, Wo, C, kh, kw).transpose(0, 3, 4, 5, 1, 2).copy()
            gxp = np.zeros((B, C, Hp, Wp))
            hs = (Ho - 1) * stride + 1
            ws = (Wo - 1) * stride + 1
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i : i + hs : stride, j : j + ws : stride] += gcols[:, :, i, j]
            gx = gxp[:, :, padding : padding + H, padding : padding + W] if padding else gxp
        grads = [gx, gw]
        if bias is not None:
            grads.append(gmat.sum(axis=0))
        return grads

    return _record(np.ascontiguousarray(y), parents, fn, "conv2d")


def max_pool2d(x, kernel: int = 2) -> Tensor:
    """Non-overlapping max pooling (stride == kernel); trailing rows/cols are dropped.

    Ties go to the first element of the window in row-major order.
    """
    x = as_tensor(x)
    if x.ndim != 4 or x.shape[2] < kernel or x.shape[3] < kernel:
        raise ShapeError("max_pool2d", x.shape)
    B, C, H, W = x.shape
    Ho, Wo = H // kernel, W // kernel
    k = kernel
    xc = x.data[:, :, : Ho * k, : Wo * k]
    views = [xc[:, :, i::k, j::k] for i in range(k) for j in range(k)]
    y = views[0].copy()
    for v in views[1:]:
        np.maximum(y, v, out=y)

    def fn(g):
        out = np.zeros(x.shape)
        taken = np.zeros(y.shape, dtype=bool)
        for n, v in enumerate(views):
            i, j = divmod(n, k)
            hit = (v == y) & ~taken
            taken |= hit
            out[:, :, i : Ho * k : k, j : Wo * k : k] = g * hit
        return (out,)

    return _record(y, (x,), fn, "max_pool2d")


def batch_norm(x, gamma=None, beta=None, eps: float = 1e-5):
    """Normalise with batch statistics over every axis except 1.

    Returns ``(out, batch_mean, batch_var)``; the variance is the biased estimate.
    Works for (B, F) and (B, C, H, W) inputs.
    """
    x = as_tensor(x)
    if x.ndim not in (2, 4):
        raise ShapeError("batch_norm", x.shape)
    axes = (0,) if x.ndim == 2 else (0, 2, 3)
    bshape = (1, -1) if x.ndim == 2 else (1, -1, 1, 1)
    sub = "bc" if x.ndim == 2 else "bchw"
    chan_dot = f"{sub},{sub}->c"
    n = x.size // x.shape[1]
    mu = x.data.mean(axis=axes, keepdims=True)
    xhat = x.data - mu
    var = (np.einsum(chan_dot, xhat, xhat) / n).reshape(bshape)
    inv = 1.0 / np.sqrt(var + eps)
    xhat *= inv
    gdat = None if gamma is None else as_tensor(gamma).data.reshape(bshape)
    y = xhat if gamma is None else xhat * gdat
    parents = [x]
    if gamma is not None:
        parents.append(as_tensor(gamma))
    if beta is not None:
        y = y + as_tensor(beta).data.reshape(bshape)
        parents.append(as_tensor(beta))

    def fn(g):
        dxhat = g if gdat is None else g * gdat
        s1 = dxhat.sum(axis=axes, keepdims=True)
        s2 = np.einsum(chan_dot, dxhat, xhat).reshape(bshape)
        dx = xhat * (-s2)
        dx += n * dxhat
        dx -= s1
        dx *= inv / n
        grads = [dx]
        if gamma is not None:
            grads.append(np.einsum(chan_dot, g, xhat))
        if beta is not None:
            grads.append(g.sum(axis=axes))
        return grads

    out = _record(y, parents, fn, "batch_norm")
    return out, mu.reshape(-1), var.reshape(-1)


def affine_channels(x, scale: np.ndarray, shift: np.ndarray) -> Tensor:
    """Per-channel ``x * scale + shift`` with constant (non-learned) coefficients."""
    x = as_tensor(x)
    bshape = (1, -1) if x.ndim == 2 else (1, -1, 1, 1)
    s = scale.reshape(bshape)
    return _record(x.data * s + shift.reshape(bshape), (x,), lambda g: (g * s,), "affine_channels")
