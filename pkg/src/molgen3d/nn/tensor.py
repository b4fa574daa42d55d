"""Dense-tensor reverse-mode autodiff over numpy arrays.

A Tensor wraps a row-major numpy array and remembers how it was produced;
backward() replays the tape in reverse topological order. Training runs in
32-bit; gradient checks switch to 64-bit via the precision() context.
Debug mode (finite_check) asserts every op output is finite.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable

import numpy as np
from scipy.special import erf

_DEFAULT_DTYPE = np.float32
_GRAD_ENABLED = True
_FINITE_CHECK = False


class ShapeError(ValueError):
    """Operands with incompatible shapes; message carries both."""


def default_dtype():
    return _DEFAULT_DTYPE


@contextlib.contextmanager
def precision(dtype):
    """Temporarily switch the dtype newly created tensors use."""
    global _DEFAULT_DTYPE
    prev = _DEFAULT_DTYPE
    _DEFAULT_DTYPE = np.dtype(dtype).type
    try:
        yield
    finally:
        _DEFAULT_DTYPE = prev


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


@contextlib.contextmanager
def finite_check(enabled: bool = True):
    global _FINITE_CHECK
    prev = _FINITE_CHECK
    _FINITE_CHECK = enabled
    try:
        yield
    finally:
        _FINITE_CHECK = prev


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if arr.dtype != _DEFAULT_DTYPE:
            arr = arr.astype(_DEFAULT_DTYPE)
        self.data: np.ndarray = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad) and _GRAD_ENABLED
        self._backward: Callable[[np.ndarray], None] | None = None
        self._parents: tuple[Tensor, ...] = ()

    # -- bookkeeping ------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = grad.astype(self.data.dtype, copy=True)
        else:
            self.grad += grad

    def backward(self, grad: np.ndarray | None = None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(
                    f"backward() without a seed needs a scalar, got {self.shape}"
                )
            grad = np.ones_like(self.data)
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.asarray(grad, dtype=self.data.dtype))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other):
        return _binary(self, other, np.add, lambda a, b, g: (g, g))

    __radd__ = __add__

    def __sub__(self, other):
        return _binary(self, other, np.subtract, lambda a, b, g: (g, -g))

    def __rsub__(self, other):
        return _to_tensor(other) - self

    def __mul__(self, other):
        return _binary(self, other, np.multiply, lambda a, b, g: (g * b, g * a))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return _binary(
            self, other, np.divide, lambda a, b, g: (g / b, -g * a / (b * b))
        )

    def __rtruediv__(self, other):
        return _to_tensor(other) / self

    def __neg__(self):
        return _unary(self, np.negative, lambda a, out, g: -g)

    def __pow__(self, exponent: float):
        e = float(exponent)
        return _unary(
            self, lambda a: np.power(a, e), lambda a, out, g: g * e * np.power(a, e - 1)
        )

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        out = _make(self.data[idx], (self,))
        if out.requires_grad:

            def bw(g, idx=idx, self=self):
                full = np.zeros_like(self.data)
                np.add.at(full, idx, g)
                self._accumulate(full)

            out._backward = bw
        return out

    # -- shape ops ---------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = _make(self.data.reshape(shape), (self,))
        if out.requires_grad:
            out._backward = lambda g: self._accumulate(g.reshape(self.data.shape))
        return out

    def transpose(self, axes: tuple[int, ...]):
        out = _make(np.transpose(self.data, axes), (self,))
        if out.requires_grad:
            inv = tuple(np.argsort(axes))
            out._backward = lambda g: self._accumulate(np.transpose(g, inv))
        return out

    def swapaxes(self, a: int, b: int):
        out = _make(np.swapaxes(self.data, a, b), (self,))
        if out.requires_grad:
            out._backward = lambda g: self._accumulate(np.swapaxes(g, a, b))
        return out

    # -- reductions ---------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        out = _make(self.data.sum(axis=axis, keepdims=keepdims), (self,))
        if out.requires_grad:

            def bw(g):
                gg = g
                if not keepdims and axis is not None:
                    gg = np.expand_dims(gg, axis)
                self._accumulate(np.broadcast_to(gg, self.data.shape).copy())

            out._backward = bw
        return out

    def mean(self, axis=None, keepdims: bool = False):
        n = self.data.size if axis is None else np.prod(
            [self.data.shape[a] for a in _axes_tuple(axis, self.data.ndim)]
        )
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(n))

    # -- pointwise ----------------------------------------------------------

    def exp(self):
        return _unary(self, np.exp, lambda a, out, g: g * out)

    def log(self):
        return _unary(self, np.log, lambda a, out, g: g / a)

    def sqrt(self):
        return _unary(self, np.sqrt, lambda a, out, g: g * 0.5 / out)

    def tanh(self):
        return _unary(self, np.tanh, lambda a, out, g: g * (1.0 - out * out))


def _axes_tuple(axis, ndim) -> tuple[int, ...]:
    if isinstance(axis, int):
        return (axis % ndim,)
    return tuple(a % ndim for a in axis)


def _to_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _maybe_check(arr: np.ndarray) -> None:
    if _FINITE_CHECK and not np.all(np.isfinite(arr)):
        raise FloatingPointError("non-finite values in op output")


def _make(data: np.ndarray, parents: tuple[Tensor, ...]) -> Tensor:
    _maybe_check(data)
    out = Tensor.__new__(Tensor)
    out.data = data if data.dtype == _DEFAULT_DTYPE else data.astype(_DEFAULT_DTYPE)
    out.grad = None
    out.requires_grad = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    out._backward = None
    out._parents = tuple(p for p in parents if p.requires_grad) if out.requires_grad else ()
    return out


def _unary(x: Tensor, fn, grad_fn) -> Tensor:
    out = _make(fn(x.data), (x,))
    if out.requires_grad:
        out._backward = lambda g: x._accumulate(grad_fn(x.data, out.data, g))
    return out


def _binary(a, b, fn, grad_fn) -> Tensor:
    a, b = _to_tensor(a), _to_tensor(b)
    try:
        data = fn(a.data, b.data)
    except ValueError:
        raise ShapeError(f"incompatible shapes {a.shape} and {b.shape}") from None
    out = _make(data, (a, b))
    if out.requires_grad:

        def bw(g):
            ga, gb = grad_fn(a.data, b.data, g)
            if a.requires_grad:
                a._accumulate(_unbroadcast(ga, a.data.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(gb, b.data.shape))

        out._backward = bw
    return out


# -- composite / fused ops ---------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _to_tensor(a), _to_tensor(b)
    if a.data.shape[-1] != b.data.shape[-2 if b.data.ndim > 1 else 0]:
        raise ShapeError(f"matmul mismatch: {a.shape} @ {b.shape}")
    out = _make(np.matmul(a.data, b.data), (a, b))
    if out.requires_grad:

        def bw(g):
            if a.requires_grad:
                ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
                a._accumulate(_unbroadcast(ga, a.data.shape))
            if b.requires_grad:
                gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
                b._accumulate(_unbroadcast(gb, b.data.shape))

        out._backward = bw
    return out


def concat(tensors: Iterable[Tensor], axis: int = -1) -> Tensor:
    ts = [_to_tensor(t) for t in tensors]
    out = _make(np.concatenate([t.data for t in ts], axis=axis), tuple(ts))
    if out.requires_grad:
        sizes = [t.data.shape[axis] for t in ts]
        splits = np.cumsum(sizes)[:-1]

        def bw(g):
            for t, piece in zip(ts, np.split(g, splits, axis=axis)):
                if t.requires_grad:
                    t._accumulate(piece)

        out._backward = bw
    return out


def gelu(x: Tensor) -> Tensor:
    """Exact Gaussian error linear unit, 0.5 x (1 + erf(x / sqrt(2)))."""
    x = _to_tensor(x)
    cdf = 0.5 * (1.0 + erf(x.data / np.sqrt(2.0)))
    out = _make(x.data * cdf, (x,))
    if out.requires_grad:
        pdf = np.exp(-0.5 * x.data * x.data) / np.sqrt(2.0 * np.pi)
        out._backward = lambda g: x._accumulate(g * (cdf + x.data * pdf))
    return out


def layer_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean, unit variance; no affine part."""
    x = _to_tensor(x)
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = _make(xhat, (x,))
    if out.requires_grad:

        def bw(g):
            gm = g.mean(axis=-1, keepdims=True)
            gx = (g * xhat).mean(axis=-1, keepdims=True)
            x._accumulate(inv * (g - gm - xhat * gx))

        out._backward = bw
    return out


def softmax(x: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis; masked-out entries get exactly zero.

    mask is a constant boolean array broadcastable to x (True = keep). A
    fully masked row yields a zero row rather than NaN.
    """
    x = _to_tensor(x)
    if mask is None:
        z = x.data
    else:
        z = np.where(mask, x.data, -np.inf)
    mx = np.max(z, axis=-1, keepdims=True)
    mx = np.where(np.isfinite(mx), mx, 0.0)
    e = np.exp(z - mx)
    denom = e.sum(axis=-1, keepdims=True)
    p = np.divide(e, denom, out=np.zeros_like(e), where=denom > 0)
    out = _make(p, (x,))
    if out.requires_grad:

        def bw(g):
            dot = (g * p).sum(axis=-1, keepdims=True)
            x._accumulate(p * (g - dot))

        out._backward = bw
    return out


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row gather: (V, D) table indexed by an integer array of any shape."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise ShapeError(
            f"embedding ids out of range [0, {table.data.shape[0]}): "
            f"[{ids.min()}, {ids.max()}]"
        )
    out = _make(table.data[ids], (table,))
    if out.requires_grad:

        def bw(g):
            full = np.zeros_like(table.data)
            np.add.at(full, ids.reshape(-1), g.reshape(-1, table.data.shape[-1]))
            table._accumulate(full)

        out._backward = bw
    return out


def cross_entropy(
    logits: Tensor, targets: np.ndarray, ignore_id: int | None = None
) -> Tensor:
    """Mean token-level negative log likelihood over non-ignored positions.

    logits: (..., V); targets: integer array shaped like logits without the
    final axis. Fused for stability (log-sum-exp) and to keep the graph flat.
    """
    logits = _to_tensor(logits)
    targets = np.asarray(targets)
    flat = logits.data.reshape(-1, logits.data.shape[-1])
    tgt = targets.reshape(-1)
    keep = np.ones(tgt.shape, dtype=bool) if ignore_id is None else tgt != ignore_id
    n_used = int(keep.sum())
    if n_used == 0:
        raise ShapeError("cross_entropy: every target position is ignored")
    mx = flat.max(axis=-1, keepdims=True)
    lse = mx[:, 0] + np.log(np.exp(flat - mx).sum(axis=-1))
    safe_tgt = np.where(keep, tgt, 0)
    nll = lse - flat[np.arange(flat.shape[0]), safe_tgt]
    loss = float((nll * keep).sum() / n_used)
    out = _make(np.asarray(loss), (logits,))
    if out.requires_grad:

        def bw(g):
            p = np.exp(flat - mx)
            p /= p.sum(axis=-1, keepdims=True)
            p[np.arange(flat.shape[0]), safe_tgt] -= 1.0
            p *= (keep / n_used)[:, None]
            logits._accumulate(float(g) * p.reshape(logits.data.shape))

        out._backward = bw
    return out


def mse(pred: Tensor, target: np.ndarray, mask: np.ndarray | None = None) -> Tensor:
    """Mean squared error against a constant target, optionally masked.

    mask broadcasts against pred (True = include); the mean runs over the
    included scalar entries.
    """
    pred = _to_tensor(pred)
    target = np.asarray(target, dtype=pred.data.dtype)
    diff = pred.data - target
    if mask is None:
        n = diff.size
        w = None
    else:
        w = np.broadcast_to(mask, diff.shape)
        n = int(w.sum())
        if n == 0:
            raise ShapeError("mse: empty mask")
    sq = diff * diff if w is None else diff * diff * w
    out = _make(np.asarray(float(sq.sum() / n)), (pred,))
    if out.requires_grad:

        def bw(g):
            grad = 2.0 * diff / n
            if w is not None:
                grad = grad * w
            pred._accumulate(float(g) * grad)

        out._backward = bw
    return out
