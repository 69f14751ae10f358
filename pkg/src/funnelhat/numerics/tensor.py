"""Reverse-mode automatic differentiation over dense float64 arrays.

A ``Tensor`` wraps a C-contiguous ``numpy`` array and records the ops
that produced it on an implicit tape (parent links plus a backward
closure).  Calling ``backward()`` on a scalar result walks the tape in
reverse topological order and accumulates gradients into ``.grad``.

The op set is deliberately small: exactly what a conformer transducer
needs, with fused kernels (layer norm, depthwise conv, pooling) where a
hand-written gradient is both faster and clearer than a chain of
primitives.  Every op checks its output for non-finite values and raises
``NumericError`` instead of letting NaN or Inf propagate silently.
"""

from __future__ import annotations

import contextlib
import math
from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import ConfigError, NumericError, ShapeError

_grad_enabled: bool = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block. Saves memory during inference."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _check_finite(arr: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite value produced by op '{op}'")


class Tensor:
    """Dense float64 array with an optional gradient tape entry."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data: np.ndarray = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # -- tape -----------------------------------------------------------

    def backward(self, seed: np.ndarray | None = None) -> None:
        """Accumulate gradients of this value into every reachable parent.

        ``seed`` defaults to 1.0 and is only optional for scalars.
        """
        if seed is None:
            if self.data.size != 1:
                raise ShapeError("backward() without seed requires a scalar")
            seed = np.ones_like(self.data)
        else:
            seed = np.asarray(seed, dtype=np.float64)
            if seed.shape != self.data.shape:
                raise ShapeError("seed shape does not match tensor shape")

        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))

        self.grad = seed if self.grad is None else self.grad + seed
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar -------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(_to_tensor(other), -1.0))

    def __rsub__(self, other):
        return add(_to_tensor(other), mul(self, -1.0))

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_to_tensor(other), self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return take_slice(self, key)

    def __pow__(self, exponent):
        return power(self, exponent)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return reduce_mean(self, axis=axis, keepdims=keepdims)


def _to_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def from_op(
    data: np.ndarray,
    parents: Sequence[Tensor],
    backward: Callable[[np.ndarray], None] | None,
    op: str = "custom",
) -> Tensor:
    """Build a tape node from a precomputed forward value.

    Extension point for fused ops whose gradient is written by hand.
    ``backward`` receives the upstream gradient and must call ``accum``
    on each parent it wants to update.
    """
    _check_finite(np.asarray(data), op)
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def accum(t: Tensor, g: np.ndarray) -> None:
    """Add ``g`` into ``t.grad``, allocating on first touch."""
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64)
    else:
        t.grad = t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- arithmetic ---------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _to_tensor(a), _to_tensor(b)
    out = a.data + b.data

    def bw(g: np.ndarray) -> None:
        accum(a, _unbroadcast(g, a.data.shape))
        accum(b, _unbroadcast(g, b.data.shape))

    return from_op(out, (a, b), bw, "add")


def mul(a, b) -> Tensor:
    a, b = _to_tensor(a), _to_tensor(b)
    out = a.data * b.data

    def bw(g: np.ndarray) -> None:
        accum(a, _unbroadcast(g * b.data, a.data.shape))
        accum(b, _unbroadcast(g * a.data, b.data.shape))

    return from_op(out, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a, b = _to_tensor(a), _to_tensor(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a.data / b.data

    def bw(g: np.ndarray) -> None:
        accum(a, _unbroadcast(g / b.data, a.data.shape))
        accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return from_op(out, (a, b), bw, "div")


def power(a, exponent: float) -> Tensor:
    a = _to_tensor(a)
    exponent = float(exponent)
    out = a.data**exponent

    def bw(g: np.ndarray) -> None:
        accum(a, g * exponent * a.data ** (exponent - 1.0))

    return from_op(out, (a,), bw, "power")


def matmul(a, b) -> Tensor:
    a, b = _to_tensor(a), _to_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul operands must have ndim >= 2")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dims {a.shape} x {b.shape}")
    if a.shape[:-2] != b.shape[:-2]:
        raise ShapeError("matmul batch dims must match exactly")
    out = np.matmul(a.data, b.data)

    def bw(g: np.ndarray) -> None:
        accum(a, np.matmul(g, np.swapaxes(b.data, -1, -2)))
        accum(b, np.matmul(np.swapaxes(a.data, -1, -2), g))

    return from_op(out, (a, b), bw, "matmul")


# -- shape ops ----------------------------------------------------------


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    a = _to_tensor(a)
    out = a.data.reshape(shape)

    def bw(g: np.ndarray) -> None:
        accum(a, g.reshape(a.data.shape))

    return from_op(out, (a,), bw, "reshape")


def transpose(a: Tensor, axes: tuple[int, ...] | None = None) -> Tensor:
    a = _to_tensor(a)
    if axes is None:
        axes = tuple(range(a.ndim))[::-1]
    out = np.transpose(a.data, axes)
    inverse = tuple(np.argsort(axes))

    def bw(g: np.ndarray) -> None:
        accum(a, np.transpose(g, inverse))

    return from_op(out, (a,), bw, "transpose")


def take_slice(a: Tensor, key) -> Tensor:
    """Basic indexing (ints, slices, tuples thereof). No fancy indexing."""
    a = _to_tensor(a)
    out = a.data[key]

    def bw(g: np.ndarray) -> None:
        z = np.zeros_like(a.data)
        z[key] += g
        accum(a, z)

    return from_op(out, (a,), bw, "slice")


def take_rows(a: Tensor, indices: np.ndarray) -> Tensor:
    """Gather rows along axis 0; the embedding-lookup primitive."""
    a = _to_tensor(a)
    idx = np.asarray(indices, dtype=np.int64)
    out = np.take(a.data, idx, axis=0)

    def bw(g: np.ndarray) -> None:
        z = np.zeros_like(a.data)
        np.add.at(z, idx.reshape(-1), g.reshape(-1, *a.data.shape[1:]))
        accum(a, z)

    return from_op(out, (a,), bw, "take_rows")


def take_last_axis(a: Tensor, indices: np.ndarray) -> Tensor:
    """Gather along the last axis, one or more picks per leading position."""
    a = _to_tensor(a)
    idx = np.asarray(indices, dtype=np.int64)
    if idx.shape[:-1] != a.shape[:-1]:
        raise ShapeError(f"index shape {idx.shape} does not match {a.shape}")
    out = np.take_along_axis(a.data, idx, axis=-1)

    def bw(g: np.ndarray) -> None:
        flat = a.data.reshape(-1, a.shape[-1])
        gi = idx.reshape(-1, idx.shape[-1])
        gg = g.reshape(-1, idx.shape[-1])
        z = np.zeros_like(flat)
        np.add.at(z, (np.arange(flat.shape[0])[:, None], gi), gg)
        accum(a, z.reshape(a.data.shape))

    return from_op(out, (a,), bw, "take_last_axis")


def concat(parts: Iterable[Tensor], axis: int = 0) -> Tensor:
    parts = [_to_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat of zero tensors")
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]

    def bw(g: np.ndarray) -> None:
        offset = 0
        for p, s in zip(parts, sizes):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offset, offset + s)
            accum(p, g[tuple(sl)])
            offset += s

    return from_op(out, tuple(parts), bw, "concat")


# -- reductions ---------------------------------------------------------


def reduce_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = _to_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g: np.ndarray) -> None:
        if axis is None:
            accum(a, np.broadcast_to(g, a.data.shape).copy())
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        accum(a, np.broadcast_to(g, a.data.shape).copy())

    return from_op(out, (a,), bw, "sum")


def reduce_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = _to_tensor(a)
    if axis is None:
        count = a.data.size
    else:
        count = a.data.shape[axis]
    return mul(reduce_sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


# -- pointwise ----------------------------------------------------------


def exp(a: Tensor) -> Tensor:
    a = _to_tensor(a)
    out = np.exp(a.data)

    def bw(g: np.ndarray) -> None:
        accum(a, g * out)

    return from_op(out, (a,), bw, "exp")


def log(a: Tensor) -> Tensor:
    a = _to_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.data)

    def bw(g: np.ndarray) -> None:
        accum(a, g / a.data)

    return from_op(out, (a,), bw, "log")


def sqrt(a: Tensor) -> Tensor:
    a = _to_tensor(a)
    with np.errstate(invalid="ignore"):
        out = np.sqrt(a.data)

    def bw(g: np.ndarray) -> None:
        accum(a, g * 0.5 / out)

    return from_op(out, (a,), bw, "sqrt")


def tanh(a: Tensor) -> Tensor:
    a = _to_tensor(a)
    out = np.tanh(a.data)

    def bw(g: np.ndarray) -> None:
        accum(a, g * (1.0 - out * out))

    return from_op(out, (a,), bw, "tanh")


def _sigmoid_np(x: np.ndarray) -> np.ndarray:
    # tanh form: stable for any magnitude, no branching.
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid(a: Tensor) -> Tensor:
    a = _to_tensor(a)
    out = _sigmoid_np(a.data)

    def bw(g: np.ndarray) -> None:
        accum(a, g * out * (1.0 - out))

    return from_op(out, (a,), bw, "sigmoid")


def softplus(a: Tensor) -> Tensor:
    """log(1 + exp(x)), computed without overflow."""
    a = _to_tensor(a)
    out = np.logaddexp(0.0, a.data)

    def bw(g: np.ndarray) -> None:
        accum(a, g * _sigmoid_np(a.data))

    return from_op(out, (a,), bw, "softplus")


def swish(a: Tensor) -> Tensor:
    """x * sigmoid(x), fused."""
    a = _to_tensor(a)
    s = _sigmoid_np(a.data)
    out = a.data * s

    def bw(g: np.ndarray) -> None:
        accum(a, g * (s + a.data * s * (1.0 - s)))

    return from_op(out, (a,), bw, "swish")


# -- normalizers --------------------------------------------------------


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    a = _to_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g: np.ndarray) -> None:
        inner = (g * out).sum(axis=axis, keepdims=True)
        accum(a, (g - inner) * out)

    return from_op(out, (a,), bw, "softmax")


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    a = _to_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse

    def bw(g: np.ndarray) -> None:
        accum(a, g - np.exp(out) * g.sum(axis=axis, keepdims=True))

    return from_op(out, (a,), bw, "log_softmax")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalize the last axis to zero mean, unit variance, then scale and shift."""
    x, gain, bias = _to_tensor(x), _to_tensor(gain), _to_tensor(bias)
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError("layer_norm gain/bias must match the last axis")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def bw(g: np.ndarray) -> None:
        lead = tuple(range(g.ndim - 1))
        accum(gain, (g * xhat).sum(axis=lead))
        accum(bias, g.sum(axis=lead))
        gx = g * gain.data
        # d/dx of xhat: project out the mean and the direction of xhat.
        inner = (gx * xhat).mean(axis=-1, keepdims=True)
        gmean = gx.mean(axis=-1, keepdims=True)
        accum(x, inv * (gx - gmean - xhat * inner))

    return from_op(out, (x, gain, bias), bw, "layer_norm")


# -- sequence ops -------------------------------------------------------


def depthwise_conv1d(x: Tensor, kernel: Tensor) -> Tensor:
    """Per-channel 1-D convolution, zero padded to preserve length.

    ``x`` is (T, d), ``kernel`` is (k, d) with odd k; channel c of the
    output mixes only channel c of the input.
    """
    x, kernel = _to_tensor(x), _to_tensor(kernel)
    if x.ndim != 2 or kernel.ndim != 2:
        raise ShapeError("depthwise_conv1d expects (T, d) input and (k, d) kernel")
    if x.shape[1] != kernel.shape[1]:
        raise ShapeError(f"channel mismatch: {x.shape} vs {kernel.shape}")
    k = kernel.shape[0]
    if k % 2 == 0:
        raise ConfigError("depthwise_conv1d kernel width must be odd")
    t, d = x.shape
    pad = (k - 1) // 2
    xp = np.zeros((t + 2 * pad, d))
    xp[pad : pad + t] = x.data
    out = np.zeros((t, d))
    for j in range(k):
        out += xp[j : j + t] * kernel.data[j]

    def bw(g: np.ndarray) -> None:
        gxp = np.zeros((t + 2 * pad, d))
        gk = np.zeros((k, d))
        for j in range(k):
            gxp[j : j + t] += g * kernel.data[j]
            gk[j] = (g * xp[j : j + t]).sum(axis=0)
        accum(x, gxp[pad : pad + t])
        accum(kernel, gk)

    return from_op(out, (x, kernel), bw, "depthwise_conv1d")


def pool1d(x: Tensor, stride: int, mode: str) -> Tensor:
    """Pool (T, d) over time into ceil(T / stride) frames.

    The last block may be short; it is reduced over the elements that
    actually exist.  ``mode`` is "avg" or "max"; for max the gradient
    flows to the first maximal element of each block.
    """
    x = _to_tensor(x)
    if x.ndim != 2:
        raise ShapeError("pool1d expects a (T, d) input")
    if not isinstance(stride, int) or stride < 1:
        raise ConfigError(f"pool1d stride must be a positive int, got {stride!r}")
    if mode not in ("avg", "max"):
        raise ConfigError(f"pool1d mode must be 'avg' or 'max', got {mode!r}")
    t, d = x.shape
    if t == 0:
        raise ShapeError("pool1d on an empty sequence")
    starts = np.arange(0, t, stride)
    counts = np.minimum(starts + stride, t) - starts

    if mode == "avg":
        out = np.add.reduceat(x.data, starts, axis=0) / counts[:, None]

        def bw(g: np.ndarray) -> None:
            accum(x, np.repeat(g / counts[:, None], counts, axis=0))

    else:
        out = np.maximum.reduceat(x.data, starts, axis=0)
        argmax = np.empty((len(starts), d), dtype=np.int64)
        for i, s in enumerate(starts):
            argmax[i] = s + np.argmax(x.data[s : s + counts[i]], axis=0)

        def bw(g: np.ndarray) -> None:
            z = np.zeros_like(x.data)
            cols = np.arange(d)
            for i in range(len(starts)):
                z[argmax[i], cols] += g[i]
            accum(x, z)

    return from_op(out, (x,), bw, "pool1d")


def stack_scalars(values: Sequence[Tensor]) -> Tensor:
    """Concatenate scalar tensors into a 1-D vector."""
    return concat([reshape(v, (1,)) for v in values], axis=0)
