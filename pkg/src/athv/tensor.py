"""Dense tensors with reverse-mode automatic differentiation.

The op set is deliberately small: exactly what the reconstruction networks
need. Arrays are row-major numpy arrays, images are channel-major [C, H, W],
and complex data lives in a trailing pair of real planes (see fourier.py).
Forward results are plain values; when gradients are enabled each op attaches
a closure that scatters the output gradient back to its inputs, and
``Tensor.backward()`` replays those closures in reverse topological order.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

DEFAULT_DTYPE = np.float32

_grad_enabled = True


class ShapeError(ValueError):
    """Raised when operand shapes violate an operation's contract."""


class no_grad:
    """Context manager that disables graph construction (inference mode)."""

    def __enter__(self):
        global _grad_enabled
        self._saved = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._saved
        return False


class Tensor:
    """A numpy array plus gradient bookkeeping.

    ``data`` holds the value, ``grad`` accumulates d(loss)/d(self) after a
    ``backward()`` call on a downstream scalar. Tensors are immutable by
    convention once created; only the optimizer writes into parameter data.
    """

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_prev")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._backward = None
        self._prev: tuple = ()

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def _accum(self, g) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self) -> None:
        """Accumulate gradients of this scalar into every ancestor."""
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar root, got shape {self.shape}")
        topo: list[Tensor] = []
        visited = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._prev:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward()

    # -- reductions and shape ops as methods ---------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        x = self
        out = _result(np.sum(x.data, axis=axis, keepdims=keepdims), (x,))
        if out.requires_grad:
            def _bw():
                x._accum(_expand_reduced(out.grad, x.shape, axis, keepdims))
            out._backward = _bw
        return out

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        x = self
        n = x.data.size if axis is None else _axis_size(x.shape, axis)
        out = _result(np.mean(x.data, axis=axis, keepdims=keepdims), (x,))
        if out.requires_grad:
            def _bw():
                x._accum(_expand_reduced(out.grad, x.shape, axis, keepdims) / n)
            out._backward = _bw
        return out

    def reshape(self, shape) -> "Tensor":
        x = self
        out = _result(x.data.reshape(shape), (x,))
        if out.requires_grad:
            def _bw():
                x._accum(out.grad.reshape(x.shape))
            out._backward = _bw
        return out

    # -- operators ------------------------------------------------------------

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

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(x, dtype=dtype)


def parameter(data, dtype=DEFAULT_DTYPE) -> Tensor:
    return Tensor(np.array(data, dtype=dtype), requires_grad=True)


def _result(data: np.ndarray, inputs: tuple) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._prev = inputs
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum gradient over axes that were broadcast in the forward op."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _axis_size(shape, axis) -> int:
    if isinstance(axis, int):
        axis = (axis,)
    return int(np.prod([shape[a] for a in axis]))


def _expand_reduced(g: np.ndarray, shape, axis, keepdims) -> np.ndarray:
    """Broadcast a reduced gradient back to the pre-reduction shape."""
    if axis is None:
        return np.broadcast_to(g.reshape((1,) * len(shape)), shape)
    if not keepdims:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        axes = tuple(a % len(shape) for a in axes)
        kept = list(g.shape)
        for a in sorted(axes):
            kept.insert(a, 1)
        g = g.reshape(kept)
    return np.broadcast_to(g, shape)


# -- elementwise arithmetic ----------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = _result(a.data + b.data, (a, b))
    if out.requires_grad:
        def _bw():
            if a.requires_grad:
                a._accum(_unbroadcast(out.grad, a.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(out.grad, b.shape))
        out._backward = _bw
    return out


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = _result(a.data - b.data, (a, b))
    if out.requires_grad:
        def _bw():
            if a.requires_grad:
                a._accum(_unbroadcast(out.grad, a.shape))
            if b.requires_grad:
                b._accum(-_unbroadcast(out.grad, b.shape))
        out._backward = _bw
    return out


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = _result(a.data * b.data, (a, b))
    if out.requires_grad:
        def _bw():
            if a.requires_grad:
                a._accum(_unbroadcast(out.grad * b.data, a.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(out.grad * a.data, b.shape))
        out._backward = _bw
    return out


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = _result(a.data / b.data, (a, b))
    if out.requires_grad:
        def _bw():
            if a.requires_grad:
                a._accum(_unbroadcast(out.grad / b.data, a.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(-out.grad * a.data / (b.data * b.data), b.shape))
        out._backward = _bw
    return out


def neg(a) -> Tensor:
    a = as_tensor(a)
    out = _result(-a.data, (a,))
    if out.requires_grad:
        def _bw():
            a._accum(-out.grad)
        out._backward = _bw
    return out


def maximum(a, b) -> Tensor:
    """Pointwise max; on exact ties the gradient routes to ``a`` in full."""
    a, b = _pair(a, b)
    take_a = a.data >= b.data
    out = _result(np.where(take_a, a.data, b.data), (a, b))
    if out.requires_grad:
        def _bw():
            if a.requires_grad:
                a._accum(_unbroadcast(out.grad * take_a, a.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(out.grad * ~take_a, b.shape))
        out._backward = _bw
    return out


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, as_tensor(b, like=a)
    if isinstance(b, Tensor):
        return as_tensor(a, like=b), b
    return as_tensor(a), as_tensor(b)


# -- activations ---------------------------------------------------------------


def relu(x) -> Tensor:
    """max(x, 0); the subgradient at 0 is 0."""
    x = as_tensor(x)
    out = _result(np.maximum(x.data, 0), (x,))
    if out.requires_grad:
        def _bw():
            x._accum(out.grad * (x.data > 0))
        out._backward = _bw
    return out


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    # tanh form is overflow-safe for large |x|
    s = 0.5 * (np.tanh(0.5 * x.data) + 1.0)
    out = _result(s, (x,))
    if out.requires_grad:
        def _bw():
            x._accum(out.grad * s * (1.0 - s))
        out._backward = _bw
    return out


def sqrt(x) -> Tensor:
    x = as_tensor(x)
    r = np.sqrt(x.data)
    out = _result(r, (x,))
    if out.requires_grad:
        def _bw():
            x._accum(out.grad * 0.5 / r)
        out._backward = _bw
    return out


# -- neural-network ops --------------------------------------------------------


def _corr2d(x: np.ndarray, k: np.ndarray, stride: int, pad_h: int, pad_w: int) -> np.ndarray:
    """Raw cross-correlation of x[C,H,W] with k[F,C,kh,kw]."""
    if pad_h or pad_w:
        x = np.pad(x, ((0, 0), (pad_h, pad_h), (pad_w, pad_w)))
    kh, kw = k.shape[2], k.shape[3]
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(1, 2))
    if stride > 1:
        win = win[:, ::stride, ::stride]
    return np.tensordot(k, win, axes=((1, 2, 3), (0, 3, 4)))


def conv2d(x, kernel, bias, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation of x[C,H,W] with kernel[F,C,kh,kw] plus bias[F].

    Output extent is (H + 2*padding - kh)//stride + 1 per axis. Kernel
    extents must be odd.
    """
    x, k, b = as_tensor(x), as_tensor(kernel), as_tensor(bias)
    if x.ndim != 3 or k.ndim != 4:
        raise ShapeError(f"conv2d expects x[C,H,W] and kernel[F,C,kh,kw], got {x.shape} and {k.shape}")
    if k.shape[1] != x.shape[0]:
        raise ShapeError(f"conv2d channel mismatch: input has {x.shape[0]}, kernel expects {k.shape[1]}")
    kh, kw = k.shape[2], k.shape[3]
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"conv2d kernel extents must be odd, got {kh}x{kw}")
    if b.shape != (k.shape[0],):
        raise ShapeError(f"conv2d bias shape {b.shape} does not match {k.shape[0]} output channels")
    if padding < 0 or stride < 1:
        raise ShapeError("conv2d needs padding >= 0 and stride >= 1")
    out_data = _corr2d(x.data, k.data, stride, padding, padding) + b.data[:, None, None]
    out = _result(out_data, (x, k, b))
    if out.requires_grad:
        H, W = x.shape[1], x.shape[2]

        def _bw():
            g = out.grad
            if b.requires_grad:
                b._accum(g.sum(axis=(1, 2)))
            xp = x.data
            if padding:
                xp = np.pad(xp, ((0, 0), (padding, padding), (padding, padding)))
            if k.requires_grad:
                win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
                if stride > 1:
                    win = win[:, ::stride, ::stride]
                k._accum(np.tensordot(g, win, axes=((1, 2), (1, 2))))
            if x.requires_grad:
                if stride > 1:
                    gd = np.zeros(
                        (g.shape[0], (g.shape[1] - 1) * stride + 1, (g.shape[2] - 1) * stride + 1),
                        dtype=g.dtype,
                    )
                    gd[:, ::stride, ::stride] = g
                else:
                    gd = g
                # full correlation with the flipped, channel-transposed kernel
                kt = k.data.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1]
                need_h = H + 2 * padding
                need_w = W + 2 * padding
                have_h = gd.shape[1] + kh - 1
                have_w = gd.shape[2] + kw - 1
                if have_h < need_h or have_w < need_w:
                    gd = np.pad(gd, ((0, 0), (0, need_h - have_h), (0, need_w - have_w)))
                gxp = _corr2d(gd, kt, 1, kh - 1, kw - 1)
                x._accum(gxp[:, padding:padding + H, padding:padding + W])
        out._backward = _bw
    return out


def linear(x, weight, bias) -> Tensor:
    """weight @ x + bias for a 1-D input vector."""
    x, w, b = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if x.ndim != 1 or w.ndim != 2 or w.shape[1] != x.shape[0] or b.shape != (w.shape[0],):
        raise ShapeError(f"linear dimension mismatch: x{x.shape}, W{w.shape}, b{b.shape}")
    out = _result(w.data @ x.data + b.data, (x, w, b))
    if out.requires_grad:
        def _bw():
            g = out.grad
            if x.requires_grad:
                x._accum(w.data.T @ g)
            if w.requires_grad:
                w._accum(np.outer(g, x.data))
            if b.requires_grad:
                b._accum(g)
        out._backward = _bw
    return out


def global_avg_pool(x) -> Tensor:
    """Spatial mean per channel: [C,H,W] -> [C]."""
    x = as_tensor(x)
    if x.ndim != 3:
        raise ShapeError(f"global_avg_pool expects [C,H,W], got {x.shape}")
    out = _result(x.data.mean(axis=(1, 2)), (x,))
    if out.requires_grad:
        inv = 1.0 / (x.shape[1] * x.shape[2])

        def _bw():
            x._accum(out.grad[:, None, None] * inv)
        out._backward = _bw
    return out


def pool_down(x) -> Tensor:
    """2x2 average pooling; spatial extents must be even."""
    x = as_tensor(x)
    C, H, W = x.shape
    if H % 2 or W % 2:
        raise ShapeError(f"pool_down needs even extents, got {H}x{W}")
    out = _result(x.data.reshape(C, H // 2, 2, W // 2, 2).mean(axis=(2, 4)), (x,))
    if out.requires_grad:
        def _bw():
            g = np.repeat(np.repeat(out.grad, 2, axis=1), 2, axis=2)
            x._accum(g * 0.25)
        out._backward = _bw
    return out


def upsample(x) -> Tensor:
    """Nearest-neighbor 2x upsampling."""
    x = as_tensor(x)
    C, H, W = x.shape
    out = _result(np.repeat(np.repeat(x.data, 2, axis=1), 2, axis=2), (x,))
    if out.requires_grad:
        def _bw():
            x._accum(out.grad.reshape(C, H, 2, W, 2).sum(axis=(2, 4)))
        out._backward = _bw
    return out


def instance_norm(x, eps: float = 1e-5) -> Tensor:
    """Per-channel zero-mean unit-variance normalization (no learned affine)."""
    x = as_tensor(x)
    C, H, W = x.shape
    if H * W < 2:
        raise ShapeError("instance_norm needs at least 2 spatial elements")
    mu = x.data.mean(axis=(1, 2), keepdims=True)
    var = x.data.var(axis=(1, 2), keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = _result(xhat, (x,))
    if out.requires_grad:
        def _bw():
            g = out.grad
            gm = g.mean(axis=(1, 2), keepdims=True)
            gx = (g * xhat).mean(axis=(1, 2), keepdims=True)
            x._accum(inv * (g - gm - xhat * gx))
        out._backward = _bw
    return out


# -- shape ops -----------------------------------------------------------------


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    out = _result(np.concatenate([t.data for t in ts], axis=axis), tuple(ts))
    if out.requires_grad:
        sizes = [t.shape[axis] for t in ts]

        def _bw():
            offset = 0
            for t, n in zip(ts, sizes):
                if t.requires_grad:
                    idx = [slice(None)] * out.ndim
                    idx[axis] = slice(offset, offset + n)
                    t._accum(out.grad[tuple(idx)])
                offset += n
        out._backward = _bw
    return out


def stack(tensors: Sequence) -> Tensor:
    """Stack equal-shape tensors along a new leading axis."""
    return concat([t.reshape((1,) + t.shape) for t in tensors], axis=0)


def take(x, index: int) -> Tensor:
    """Select one slice along the leading axis."""
    x = as_tensor(x)
    out = _result(x.data[index], (x,))
    if out.requires_grad:
        def _bw():
            if x.grad is None:
                x.grad = np.zeros_like(x.data)
            x.grad[index] += out.grad
        out._backward = _bw
    return out


def pad2d(x, pads: tuple[int, int, int, int], mode: str = "reflect") -> Tensor:
    """Pad the spatial axes of x[C,H,W] by (top, bottom, left, right)."""
    x = as_tensor(x)
    top, bottom, left, right = pads
    if min(pads) < 0:
        raise ShapeError("pad2d pads must be nonnegative")
    C, H, W = x.shape
    if mode == "zero":
        out_data = np.pad(x.data, ((0, 0), (top, bottom), (left, right)))
    elif mode == "reflect":
        if max(top, bottom) >= H or max(left, right) >= W:
            raise ShapeError("reflect pad must be smaller than the extent")
        out_data = np.pad(x.data, ((0, 0), (top, bottom), (left, right)), mode="reflect")
    else:
        raise ValueError(f"unknown pad mode {mode!r}")
    out = _result(out_data, (x,))
    if out.requires_grad:
        def _bw():
            if x.grad is None:
                x.grad = np.zeros_like(x.data)
            if mode == "zero":
                x.grad += out.grad[:, top:top + H, left:left + W]
            else:
                ih = np.concatenate([np.arange(top, 0, -1), np.arange(H), np.arange(H - 2, H - 2 - bottom, -1)])
                iw = np.concatenate([np.arange(left, 0, -1), np.arange(W), np.arange(W - 2, W - 2 - right, -1)])
                np.add.at(
                    x.grad,
                    (np.arange(C)[:, None, None], ih[None, :, None], iw[None, None, :]),
                    out.grad,
                )
        out._backward = _bw
    return out


def crop2d(x, top: int, left: int, height: int, width: int) -> Tensor:
    """Take a spatial window of x[C,H,W]."""
    x = as_tensor(x)
    C, H, W = x.shape
    if top < 0 or left < 0 or top + height > H or left + width > W:
        raise ShapeError(f"crop window ({top},{left},{height},{width}) exceeds {H}x{W}")
    out = _result(x.data[:, top:top + height, left:left + width], (x,))
    if out.requires_grad:
        def _bw():
            if x.grad is None:
                x.grad = np.zeros_like(x.data)
            x.grad[:, top:top + height, left:left + width] += out.grad
        out._backward = _bw
    return out


# -- initialization ------------------------------------------------------------


def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int, dtype=DEFAULT_DTYPE) -> np.ndarray:
    """Kaiming-uniform fan-in draw: U(-b, b) with b = sqrt(6 / fan_in)."""
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)
