"""Dense tensors with tape-based reverse-mode differentiation.

Operations executed while a :class:`Tape` is active are recorded in order;
``Tape.backward`` walks the record in reverse and accumulates gradients into
every tensor that requires them. Outside a tape, operations run forward only.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    # operator sugar for the common cases
    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return slice_(self, index)


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    # constants follow the tensor they combine with, so float32 stays float32
    return Tensor(np.asarray(x, dtype=like.dtype) if like is not None else x)


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, as_tensor(b, a)
    b = as_tensor(b)
    return as_tensor(a, b), b


class Tape:
    """Ordered record of primitive ops; use as a context manager."""

    _stack: list["Tape"] = []

    def __init__(self):
        self.records: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self._consumed = False

    def __enter__(self) -> "Tape":
        Tape._stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        Tape._stack.pop()

    @classmethod
    def current(cls) -> "Tape | None":
        return cls._stack[-1] if cls._stack else None

    def reset(self) -> None:
        self.records.clear()
        self._consumed = False

    def backward(self, loss: Tensor, grad: np.ndarray | None = None) -> None:
        if self._consumed:
            raise RuntimeError("tape already replayed; call reset() before another backward")
        self._consumed = True
        loss.grad = np.ones_like(loss.data) if grad is None else np.asarray(grad, dtype=loss.dtype)
        for out, inputs, backward_fn in reversed(self.records):
            if out.grad is None:
                continue
            grads = backward_fn(out.grad)
            for inp, g in zip(inputs, grads):
                if g is None or not inp.requires_grad:
                    continue
                inp.grad = g if inp.grad is None else inp.grad + g


def _result(data: np.ndarray, inputs: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    needs = any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs)
    tape = Tape.current()
    if needs and tape is not None:
        tape.records.append((out, tuple(inputs), backward_fn))
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------- arithmetic

def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    try:
        out = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}") from None
    return _result(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    try:
        out = a.data - b.data
    except ValueError:
        raise ShapeError(f"sub: incompatible shapes {a.shape} and {b.shape}") from None
    return _result(out, (a, b), lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    try:
        out = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}") from None

    def backward(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _result(out, (a, b), backward)


def scale(a: Tensor, c: float) -> Tensor:
    return _result(a.data * c, (a,), lambda g: (g * c,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def backward(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    return _result(a.data @ b.data, (a, b), backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    y = matmul(x, weight)
    return y if bias is None else add(y, bias)


# ---------------------------------------------------------------- reductions

def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _result(out, (a,), backward)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return scale(sum_(a, axis=axis, keepdims=keepdims), 1.0 / float(count))


# ---------------------------------------------------------------- shape ops

def reshape(a: Tensor, shape) -> Tensor:
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}") from None
    return _result(out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor, axes) -> Tensor:
    inverse = np.argsort(axes)
    return _result(a.data.transpose(axes), (a,), lambda g: (g.transpose(inverse),))


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    try:
        out = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[p.shape for p in parts]}") from None
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _result(out, parts, backward)


def slice_(a: Tensor, index) -> Tensor:
    out = a.data[index]

    def backward(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return _result(np.array(out, copy=True), (a,), backward)


def gather_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    """Rows of ``a`` selected by an integer index vector (repeats allowed)."""
    idx = np.asarray(idx, dtype=np.int64)

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return (full,)

    return _result(a.data[idx], (a,), backward)


# ---------------------------------------------------------------- activations

def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _result(a.data * mask, (a,), lambda g: (g * mask,))


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    # subgradient at 0 is taken as 1
    factor = np.where(a.data >= 0, 1.0, slope).astype(a.dtype)
    return _result(a.data * factor, (a,), lambda g: (g * factor,))


def elu(a: Tensor) -> Tensor:
    neg = a.data < 0
    expm = np.expm1(np.minimum(a.data, 0))
    out = np.where(neg, expm, a.data)
    deriv = np.where(neg, expm + 1.0, 1.0).astype(a.dtype)
    return _result(out, (a,), lambda g: (g * deriv,))


# ---------------------------------------------------------------- segment ops

def segment_sum(values: Tensor, segments: np.ndarray, num_segments: int) -> Tensor:
    """Sum rows of ``values`` into ``num_segments`` buckets given by ``segments``."""
    segments = np.asarray(segments, dtype=np.int64)
    out = np.zeros((num_segments,) + values.shape[1:], dtype=values.dtype)
    np.add.at(out, segments, values.data)
    return _result(out, (values,), lambda g: (g[segments],))


def segment_mean(values: Tensor, segments: np.ndarray, num_segments: int) -> Tensor:
    segments = np.asarray(segments, dtype=np.int64)
    counts = np.bincount(segments, minlength=num_segments).astype(values.dtype)
    inv = 1.0 / np.maximum(counts, 1)
    summed = segment_sum(values, segments, num_segments)
    return mul(summed, Tensor(inv.reshape((-1,) + (1,) * (values.data.ndim - 1))))


def segment_softmax(scores: Tensor, segments: np.ndarray, num_segments: int | None = None) -> Tensor:
    """Softmax of ``scores`` taken separately within each destination segment.

    ``scores`` has the arc axis first; any trailing axes (e.g. attention heads)
    are normalized independently.
    """
    segments = np.asarray(segments, dtype=np.int64)
    if scores.shape[0] == 0:
        return _result(scores.data.copy(), (scores,), lambda g: (g,))
    if num_segments is None:
        num_segments = int(segments.max()) + 1
    s = scores.data
    seg_max = np.full((num_segments,) + s.shape[1:], -np.inf, dtype=s.dtype)
    np.maximum.at(seg_max, segments, s)
    ex = np.exp(s - seg_max[segments])
    denom = np.zeros_like(seg_max)
    np.add.at(denom, segments, ex)
    out = ex / denom[segments]

    def backward(g):
        dot = np.zeros_like(seg_max)
        np.add.at(dot, segments, g * out)
        return (out * (g - dot[segments]),)

    return _result(out, (scores,), backward)


# ---------------------------------------------------------------- conv / pool

def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Stride-1 'same' convolution of ``x`` (N, C, H, W) with odd square kernels."""
    n, c, h, w = x.shape
    o, c2, k, k2 = weight.shape
    if c != c2 or k != k2 or k % 2 == 0:
        raise ShapeError(f"conv2d: input {x.shape} incompatible with kernel {weight.shape}")
    p = k // 2
    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p)))
    cols = sliding_window_view(xp, (k, k), axis=(2, 3))  # n, c, h, w, k, k
    cols = cols.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * w, c * k * k)
    wmat = weight.data.reshape(o, c * k * k)
    out = cols @ wmat.T
    if bias is not None:
        out += bias.data
    out = out.reshape(n, h, w, o).transpose(0, 3, 1, 2)
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        gm = g.transpose(0, 2, 3, 1).reshape(n * h * w, o)
        gw = (gm.T @ cols).reshape(weight.shape) if weight.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = (gm @ wmat).reshape(n, h, w, c, k, k)
            gxp = np.zeros_like(xp)
            for i in range(k):
                for j in range(k):
                    gxp[:, :, i:i + h, j:j + w] += gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            gx = gxp[:, :, p:p + h, p:p + w]
        if bias is None:
            return gx, gw
        return gx, gw, gm.sum(axis=0)

    return _result(out, inputs, backward)


def maxpool2d(x: Tensor) -> Tensor:
    """2x2 max pooling, stride 2; odd trailing rows/columns are dropped."""
    n, c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    blocks = x.data[:, :, : h2 * 2, : w2 * 2].reshape(n, c, h2, 2, w2, 2)
    blocks = blocks.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2, w2, 4)
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        onehot = np.zeros(blocks.shape, dtype=g.dtype)
        np.put_along_axis(onehot, arg[..., None], g[..., None], axis=-1)
        onehot = onehot.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        full = np.zeros_like(x.data)
        full[:, :, : h2 * 2, : w2 * 2] = onehot.reshape(n, c, h2 * 2, w2 * 2)
        return (full,)

    return _result(out, (x,), backward)


def roi_maxpool(fmap: Tensor, bins: np.ndarray) -> Tensor:
    """Channel-wise max over precomputed bins.

    ``fmap`` is (C, H, W); ``bins`` is an int array (R, gh, gw, 4) holding
    half-open cell ranges ``(y0, y1, x0, x1)``. An empty range yields zeros.
    Returns (R, C, gh, gw).
    """
    c, hf, wf = fmap.shape
    r, gh, gw, _ = bins.shape
    out = np.zeros((r, c, gh, gw), dtype=fmap.dtype)
    # flat argmax positions into the (H*W) plane, -1 for empty bins
    where = np.full((r, c, gh, gw), -1, dtype=np.int64)
    data = fmap.data
    for ri in range(r):
        for by in range(gh):
            for bx in range(gw):
                y0, y1, x0, x1 = bins[ri, by, bx]
                if y1 <= y0 or x1 <= x0:
                    continue
                block = data[:, y0:y1, x0:x1].reshape(c, -1)
                local = block.argmax(axis=1)
                out[ri, :, by, bx] = block[np.arange(c), local]
                bw = x1 - x0
                where[ri, :, by, bx] = (y0 + local // bw) * wf + (x0 + local % bw)

    def backward(g):
        full = np.zeros((c, hf * wf), dtype=g.dtype)
        valid = where >= 0
        chan = np.broadcast_to(np.arange(c)[None, :, None, None], where.shape)
        np.add.at(full, (chan[valid], where[valid]), g[valid])
        return (full.reshape(c, hf, wf),)

    return _result(out, (fmap,), backward)


# ---------------------------------------------------------------- losses

def log_softmax(a: Tensor) -> Tensor:
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    soft = np.exp(out)
    return _result(out, (a,), lambda g: (g - soft * g.sum(axis=-1, keepdims=True),))


def softmax_np(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=-1, keepdims=True)


def cross_entropy(
    logits: Tensor,
    labels: np.ndarray,
    mask: np.ndarray | None = None,
    class_weights: np.ndarray | None = None,
) -> Tensor:
    """Mean negative log-likelihood over masked rows of an (N, K) logit matrix."""
    labels = np.asarray(labels, dtype=np.int64)
    n, k = logits.shape
    mask = np.ones(n, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("cross_entropy: every row is masked out")
    rows = np.nonzero(mask)[0]
    picked = labels[rows]
    w = np.ones(len(rows)) if class_weights is None else np.asarray(class_weights)[picked]
    w = (w / w.sum()).astype(logits.dtype)
    shifted = logits.data[rows] - logits.data[rows].max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = -(w * logp[np.arange(len(rows)), picked]).sum()

    def backward(g):
        grad = np.zeros_like(logits.data)
        soft = np.exp(logp)
        soft[np.arange(len(rows)), picked] -= 1.0
        grad[rows] = soft * w[:, None] * g
        return (grad,)

    return _result(np.asarray(loss, dtype=logits.dtype), (logits,), backward)
