"""Reverse-mode automatic differentiation over dense float64 arrays.

Every op records its parents and a backward closure on the produced
tensor; ``backward()`` assembles the tape (a topologically ordered list
of records), seeds the scalar loss with gradient 1 and walks the tape
in reverse, visiting each node exactly once.

Conventions fixed here once and relied on by tests:
  * all buffers are float64,
  * ``conv2d`` computes cross-correlation (no kernel flip),
  * broadcasting follows numpy; gradients are summed back to the
    un-broadcast shape.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "TapeRecord",
    "no_grad",
    "grad_enabled",
    "backward",
    "concat",
    "conv2d",
    "upsample_nearest",
    "mse_loss",
    "bce_with_logits",
]

_grad_enabled = True
_node_counter = itertools.count()


class no_grad:
    """Context manager that suspends graph recording (inference mode)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev


def grad_enabled() -> bool:
    return _grad_enabled


def _as_array(value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    return arr


class Tensor:
    """A float64 n-d array with an optional gradient slot.

    Parameters
    ----------
    data : array-like
        Converted to a float64 ndarray.
    requires_grad : bool
        Leaf tensors with True accumulate gradients during backward.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward_fn", "_op", "_id")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn: Optional[Callable[[], None]] = None
        self._op = "leaf"
        self._id = next(_node_counter)

    # -- construction of op results -------------------------------------

    @staticmethod
    def _result(data: np.ndarray, parents: Sequence["Tensor"], op: str) -> "Tensor":
        track = _grad_enabled and any(p.requires_grad or p._parents for p in parents)
        out = Tensor.__new__(Tensor)
        out.data = data
        out.requires_grad = False
        out.grad = None
        out._parents = tuple(parents) if track else ()
        out._backward_fn = None
        out._op = op
        out._id = next(_node_counter)
        return out

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
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self._op!r}{flag})"

    # -- gradient plumbing ----------------------------------------------

    def _accumulate(self, grad: np.ndarray) -> None:
        if not (self.requires_grad or self._parents):
            return  # constant leaf: gradient is never consumed
        if self.grad is None:
            self.grad = np.array(grad, dtype=np.float64, copy=True)
        else:
            self.grad += grad

    @staticmethod
    def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
        """Sum a broadcast gradient back down to ``shape``."""
        while grad.ndim > len(shape):
            grad = grad.sum(axis=0)
        for axis, (g, s) in enumerate(zip(grad.shape, shape)):
            if s == 1 and g != 1:
                grad = grad.sum(axis=axis, keepdims=True)
        return grad.reshape(shape)

    # -- elementwise arithmetic -----------------------------------------

    @staticmethod
    def _coerce(other) -> "Tensor":
        return other if isinstance(other, Tensor) else Tensor(other)

    def __add__(self, other):
        other = Tensor._coerce(other)
        out = Tensor._result(self.data + other.data, (self, other), "add")

        def bwd():
            self._accumulate(Tensor._unbroadcast(out.grad, self.shape))
            other._accumulate(Tensor._unbroadcast(out.grad, other.shape))

        out._backward_fn = bwd
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor._result(-self.data, (self,), "neg")
        out._backward_fn = lambda: self._accumulate(-out.grad)
        return out

    def __sub__(self, other):
        other = Tensor._coerce(other)
        out = Tensor._result(self.data - other.data, (self, other), "sub")

        def bwd():
            self._accumulate(Tensor._unbroadcast(out.grad, self.shape))
            other._accumulate(Tensor._unbroadcast(-out.grad, other.shape))

        out._backward_fn = bwd
        return out

    def __rsub__(self, other):
        return Tensor._coerce(other) - self

    def __mul__(self, other):
        other = Tensor._coerce(other)
        out = Tensor._result(self.data * other.data, (self, other), "mul")

        def bwd():
            self._accumulate(Tensor._unbroadcast(out.grad * other.data, self.shape))
            other._accumulate(Tensor._unbroadcast(out.grad * self.data, other.shape))

        out._backward_fn = bwd
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = Tensor._coerce(other)
        out = Tensor._result(self.data / other.data, (self, other), "div")

        def bwd():
            self._accumulate(Tensor._unbroadcast(out.grad / other.data, self.shape))
            other._accumulate(
                Tensor._unbroadcast(-out.grad * self.data / (other.data * other.data), other.shape)
            )

        out._backward_fn = bwd
        return out

    def __rtruediv__(self, other):
        return Tensor._coerce(other) / self

    def __pow__(self, exponent: float):
        p = float(exponent)
        out = Tensor._result(self.data ** p, (self,), "pow")

        def bwd():
            self._accumulate(out.grad * p * self.data ** (p - 1.0))

        out._backward_fn = bwd
        return out

    # -- elementwise functions ------------------------------------------

    def exp(self):
        out = Tensor._result(np.exp(self.data), (self,), "exp")
        out._backward_fn = lambda: self._accumulate(out.grad * out.data)
        return out

    def log(self):
        out = Tensor._result(np.log(self.data), (self,), "log")
        out._backward_fn = lambda: self._accumulate(out.grad / self.data)
        return out

    def sqrt(self):
        out = Tensor._result(np.sqrt(self.data), (self,), "sqrt")
        out._backward_fn = lambda: self._accumulate(out.grad * 0.5 / out.data)
        return out

    def sigmoid(self):
        out = Tensor._result(1.0 / (1.0 + np.exp(-self.data)), (self,), "sigmoid")
        out._backward_fn = lambda: self._accumulate(out.grad * out.data * (1.0 - out.data))
        return out

    def tanh(self):
        out = Tensor._result(np.tanh(self.data), (self,), "tanh")
        out._backward_fn = lambda: self._accumulate(out.grad * (1.0 - out.data * out.data))
        return out

    def relu(self):
        out = Tensor._result(np.maximum(self.data, 0.0), (self,), "relu")

        def bwd():
            self._accumulate(out.grad * (self.data > 0.0))

        out._backward_fn = bwd
        return out

    def leaky_relu(self, slope: float = 0.01):
        data = np.where(self.data > 0.0, self.data, slope * self.data)
        out = Tensor._result(data, (self,), "leaky_relu")

        def bwd():
            self._accumulate(out.grad * np.where(self.data > 0.0, 1.0, slope))

        out._backward_fn = bwd
        return out

    # -- reductions -------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        out = Tensor._result(self.data.sum(axis=axis, keepdims=keepdims), (self,), "sum")

        def bwd():
            g = out.grad
            if not keepdims and axis is not None:
                axes = (axis,) if isinstance(axis, int) else tuple(axis)
                axes = tuple(a % self.data.ndim for a in axes)
                g = np.expand_dims(g, tuple(sorted(axes)))
            self._accumulate(np.broadcast_to(g, self.shape))

        out._backward_fn = bwd
        return out

    def mean(self, axis=None, keepdims: bool = False):
        if axis is None:
            n = self.data.size
        else:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            n = int(np.prod([self.data.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    # -- shape manipulation ----------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = Tensor._result(self.data.reshape(shape), (self,), "reshape")
        out._backward_fn = lambda: self._accumulate(out.grad.reshape(self.shape))
        return out

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        inv = tuple(np.argsort(axes))
        out = Tensor._result(self.data.transpose(axes), (self,), "transpose")
        out._backward_fn = lambda: self._accumulate(out.grad.transpose(inv))
        return out

    def __getitem__(self, idx):
        out = Tensor._result(self.data[idx], (self,), "slice")

        def bwd():
            buf = np.zeros_like(self.data)
            buf[idx] += out.grad
            self._accumulate(buf)

        out._backward_fn = bwd
        return out

    def __matmul__(self, other):
        other = Tensor._coerce(other)
        if self.ndim < 2 or other.ndim < 2:
            raise ValueError("matmul requires >=2-d operands; reshape vectors explicitly")
        out = Tensor._result(np.matmul(self.data, other.data), (self, other), "matmul")

        def bwd():
            g = out.grad
            if self.requires_grad or self._parents:
                da = np.matmul(g, np.swapaxes(other.data, -1, -2))
                self._accumulate(Tensor._unbroadcast(da, self.shape))
            if other.requires_grad or other._parents:
                db = np.matmul(np.swapaxes(self.data, -1, -2), g)
                other._accumulate(Tensor._unbroadcast(db, other.shape))

        out._backward_fn = bwd
        return out


# -- multi-input / structured ops ------------------------------------------


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Concatenate along ``axis``; the gradient splits back per input."""
    tensors = [Tensor._coerce(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    out = Tensor._result(data, tensors, "concat")

    def bwd():
        start = 0
        for t in tensors:
            idx = [slice(None)] * data.ndim
            stop = start + t.shape[axis]
            idx[axis] = slice(start, stop)
            t._accumulate(out.grad[tuple(idx)])
            start = stop

    out._backward_fn = bwd
    return out


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, oh: int, ow: int) -> np.ndarray:
    n, c = xp.shape[:2]
    cols = np.empty((n, c, kh, kw, oh, ow), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride]
    return cols.reshape(n, c * kh * kw, oh * ow)


def _col2im(cols: np.ndarray, xp_shape, kh: int, kw: int, stride: int, oh: int, ow: int) -> np.ndarray:
    n, c = xp_shape[:2]
    buf = np.zeros(xp_shape, dtype=np.float64)
    cols = cols.reshape(n, c, kh, kw, oh, ow)
    for i in range(kh):
        for j in range(kw):
            buf[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += cols[:, :, i, j]
    return buf


def conv2d(
    x: Tensor,
    kernel: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """2-D cross-correlation of ``x`` [N,C,H,W] with ``kernel`` [K,C,kh,kw].

    Differentiable w.r.t. input, kernel and bias. The kernel is applied
    as stored (cross-correlation); tests pin that definition against a
    nested-loop oracle.
    """
    x = Tensor._coerce(x)
    kernel = Tensor._coerce(kernel)
    if x.ndim != 4 or kernel.ndim != 4:
        raise ValueError(f"conv2d expects 4-d input/kernel, got {x.shape} and {kernel.shape}")
    n, c, h, w = x.shape
    k, ck, kh, kw = kernel.shape
    if ck != c:
        raise ValueError(f"conv2d channel mismatch: input has {c}, kernel expects {ck}")
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise ValueError(
            f"conv2d spatial dims too small: input {h}x{w}, pad {padding}, kernel {kh}x{kw}"
        )
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    cols = _im2col(xp, kh, kw, stride, oh, ow)  # (N, C*kh*kw, OH*OW)
    wmat = kernel.data.reshape(k, c * kh * kw)
    out_data = np.matmul(wmat, cols).reshape(n, k, oh, ow)
    if bias is not None:
        bias = Tensor._coerce(bias)
        out_data = out_data + bias.data.reshape(1, k, 1, 1)

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    out = Tensor._result(out_data, parents, "conv2d")

    def bwd():
        g = out.grad.reshape(n, k, oh * ow)
        if kernel.requires_grad or kernel._parents:
            dw = np.matmul(g, cols.transpose(0, 2, 1)).sum(axis=0).reshape(kernel.shape)
            kernel._accumulate(dw)
        if x.requires_grad or x._parents:
            dcols = np.matmul(wmat.T, g)
            dxp = _col2im(dcols, xp.shape, kh, kw, stride, oh, ow)
            if padding:
                dxp = dxp[:, :, padding : padding + h, padding : padding + w]
            x._accumulate(dxp)
        if bias is not None and (bias.requires_grad or bias._parents):
            bias._accumulate(g.sum(axis=(0, 2)))

    out._backward_fn = bwd
    return out


def upsample_nearest(x: Tensor, factor: int = 2) -> Tensor:
    """Nearest-neighbour upsampling of [N,C,H,W] by an integer factor."""
    x = Tensor._coerce(x)
    if x.ndim != 4:
        raise ValueError(f"upsample_nearest expects 4-d input, got {x.shape}")
    f = int(factor)
    data = x.data.repeat(f, axis=2).repeat(f, axis=3)
    out = Tensor._result(data, (x,), "upsample_nearest")

    def bwd():
        n, c, h, w = x.shape
        g = out.grad.reshape(n, c, h, f, w, f).sum(axis=(3, 5))
        x._accumulate(g)

    out._backward_fn = bwd
    return out


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean squared error; gradient w.r.t. pred is 2(pred-target)/n."""
    pred = Tensor._coerce(pred)
    target = Tensor._coerce(target)
    if pred.shape != target.shape:
        raise ValueError(f"mse_loss shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred - target
    return (diff * diff).mean()


def bce_with_logits(logits: Tensor, targets) -> Tensor:
    """Numerically stable mean binary cross-entropy on raw logits."""
    logits = Tensor._coerce(logits)
    t = _as_array(targets if not isinstance(targets, Tensor) else targets.data)
    z = logits.data
    data = np.maximum(z, 0.0) - z * t + np.log1p(np.exp(-np.abs(z)))
    out = Tensor._result(np.array(data.mean()), (logits,), "bce_with_logits")

    def bwd():
        sig = 1.0 / (1.0 + np.exp(-z))
        out_grad = out.grad  # scalar
        logits._accumulate(out_grad * (sig - t) / z.size)

    out._backward_fn = bwd
    return out


# -- tape and backward -------------------------------------------------------


@dataclass(frozen=True)
class TapeRecord:
    op: str
    input_ids: tuple[int, ...]
    output_id: int


class Tape:
    """Topologically ordered record of the ops reaching one scalar loss.

    Built by :func:`backward`; parents always precede children, and the
    reverse walk calls each node's backward closure exactly once.
    """

    def __init__(self, nodes: list[Tensor]):
        self._nodes = nodes
        self.records = [
            TapeRecord(n._op, tuple(p._id for p in n._parents), n._id) for n in nodes
        ]

    def __len__(self) -> int:
        return len(self._nodes)


def backward(loss: Tensor) -> Tape:
    """Run reverse-mode differentiation from a scalar ``loss``.

    Populates ``grad`` on every reachable tensor with ``requires_grad``
    set. Returns the tape for introspection.
    """
    if loss.size != 1:
        raise ValueError(f"backward requires a scalar loss, got shape {loss.shape}")
    if not loss._parents and not loss.requires_grad:
        raise ValueError("loss is detached from any recorded graph")

    # Iterative post-order DFS: parents land before children.
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if node._id in seen:
            continue
        seen.add(node._id)
        stack.append((node, True))
        for p in node._parents:
            if p._id not in seen:
                stack.append((p, False))

    loss.grad = np.ones_like(loss.data)
    visited: set[int] = set()
    for node in reversed(order):
        if node._backward_fn is not None and node.grad is not None:
            assert node._id not in visited, "tape node visited twice"
            visited.add(node._id)
            node._backward_fn()
    return Tape(order)
