# pepforge tensor: dense float64 arrays with reverse-mode gradients
#
# Responsibilities:
# - Record a computation graph for every operation whose inputs require gradients
# - Propagate gradients in reverse topological order (iterative, no recursion limit)
# - Un-broadcast gradients back to operand shapes (numpy broadcasting rules)
# - Provide the primitives the denoisers and diffusion losses are composed from
#
# Public API:
# - Tensor(data, requires_grad=False, name=None)
# - no_grad() context manager (sampling / evaluation)
# - softmax, log_softmax, concat, wrap, smooth_l1 primitives
# - numerical_grad(loss_fn, param, step) and relative_error(a, b) for gradient checks

from __future__ import annotations

import math
from collections.abc import Callable, Iterator, Sequence
from contextlib import contextmanager
from typing import Any

import numpy as np

from .errors import GraphStateError, InvalidValueError, MaskingError, ShapeError

_GRAD_ENABLED = True


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Tensor:
    """n-d float64 array that records how it was computed."""

    # ndarray <op> Tensor dispatches to the Tensor reflected operator
    __array_priority__ = 100.0

    def __init__(self, data: Any, requires_grad: bool = False, name: str | None = None) -> None:
        arr = np.array(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise InvalidValueError(f"Tensor {name!r} contains non-finite values")
        self.data: np.ndarray = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: BackwardFn | None = None

    @classmethod
    def _from_op(cls, data: np.ndarray, parents: Sequence[Tensor], backward: BackwardFn) -> Tensor:
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.name = None
        track = _GRAD_ENABLED and any(p.requires_grad for p in parents)
        out.requires_grad = track
        out._parents = tuple(parents) if track else ()
        out._backward = backward if track else None
        return out

    # -----------------
    # Introspection
    # -----------------
    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return int(self.data.ndim)

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def __len__(self) -> int:
        return int(self.data.shape[0])

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    # -----------------
    # Backward pass
    # -----------------
    def backward(self, grad: np.ndarray | None = None) -> None:
        """
        Accumulate d(self)/d(leaf) into every leaf's .grad. The recorded graph is released
        afterwards; calling backward again on the same result raises GraphStateError.
        """
        if self._backward is None:
            raise GraphStateError("backward() called on a tensor with no recorded forward graph")
        if grad is None:
            if self.data.size != 1:
                raise ShapeError("backward() without an explicit gradient needs a scalar output")
            grad = np.ones_like(self.data)
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != self.data.shape:
            raise ShapeError(f"gradient shape {grad.shape} != output shape {self.data.shape}")

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p._backward is not None and id(p) not in seen:
                    stack.append((p, False))

        pending: dict[int, np.ndarray] = {id(self): grad}
        for node in reversed(order):
            g = pending.pop(id(node), None)
            fn = node._backward
            parents = node._parents
            node._backward = None
            node._parents = ()
            if g is None or fn is None:
                continue
            for parent, pg in zip(parents, fn(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if parent._backward is None:
                    parent.grad = np.array(pg, dtype=np.float64) if parent.grad is None else parent.grad + pg
                else:
                    key = id(parent)
                    pending[key] = pg if key not in pending else pending[key] + pg

    def zero_grad(self) -> None:
        self.grad = None

    # -----------------
    # Arithmetic
    # -----------------
    def __add__(self, other: Any) -> Tensor:
        o = _lift(other)
        a_shape, b_shape = self.shape, o.shape
        return Tensor._from_op(
            self.data + o.data,
            (self, o),
            lambda g: (_unbroadcast(g, a_shape), _unbroadcast(g, b_shape)),
        )

    def __radd__(self, other: Any) -> Tensor:
        return _lift(other) + self

    def __sub__(self, other: Any) -> Tensor:
        o = _lift(other)
        a_shape, b_shape = self.shape, o.shape
        return Tensor._from_op(
            self.data - o.data,
            (self, o),
            lambda g: (_unbroadcast(g, a_shape), _unbroadcast(-g, b_shape)),
        )

    def __rsub__(self, other: Any) -> Tensor:
        return _lift(other) - self

    def __mul__(self, other: Any) -> Tensor:
        o = _lift(other)
        a, b = self.data, o.data
        return Tensor._from_op(
            a * b,
            (self, o),
            lambda g: (_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)),
        )

    def __rmul__(self, other: Any) -> Tensor:
        return _lift(other) * self

    def __truediv__(self, other: Any) -> Tensor:
        o = _lift(other)
        a, b = self.data, o.data
        return Tensor._from_op(
            a / b,
            (self, o),
            lambda g: (_unbroadcast(g / b, a.shape), _unbroadcast(-g * a / (b * b), b.shape)),
        )

    def __rtruediv__(self, other: Any) -> Tensor:
        return _lift(other) / self

    def __neg__(self) -> Tensor:
        return Tensor._from_op(-self.data, (self,), lambda g: (-g,))

    def __pow__(self, exponent: float) -> Tensor:
        if isinstance(exponent, Tensor):
            raise TypeError("Tensor ** Tensor is not supported; use exp/log")
        p = float(exponent)
        a = self.data
        return Tensor._from_op(a**p, (self,), lambda g: (g * p * a ** (p - 1.0),))

    def __matmul__(self, other: Any) -> Tensor:
        o = _lift(other)
        a, b = self.data, o.data
        if a.ndim < 2 or b.ndim < 2:
            raise ShapeError(f"matmul needs operands with ndim >= 2, got {a.shape} @ {b.shape}")
        if a.shape[-1] != b.shape[-2]:
            raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")

        def _bw(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
            ga = g @ np.swapaxes(b, -1, -2)
            gb = np.swapaxes(a, -1, -2) @ g
            return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

        return Tensor._from_op(a @ b, (self, o), _bw)

    # -----------------
    # Reductions and views
    # -----------------
    def sum(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
        shape = self.shape

        def _bw(g: np.ndarray) -> tuple[np.ndarray]:
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape),)

        return Tensor._from_op(np.sum(self.data, axis=axis, keepdims=keepdims), (self,), _bw)

    def mean(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
        if axis is None:
            count = self.size
        else:
            axes = (axis,) if isinstance(axis, int) else axis
            count = int(np.prod([self.shape[ax] for ax in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape: int) -> Tensor:
        orig = self.shape
        new = shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape
        return Tensor._from_op(self.data.reshape(new), (self,), lambda g: (g.reshape(orig),))

    def transpose(self, *axes: int) -> Tensor:
        perm = tuple(axes) if axes else tuple(reversed(range(self.ndim)))
        inv = tuple(np.argsort(perm))
        return Tensor._from_op(np.transpose(self.data, perm), (self,), lambda g: (np.transpose(g, inv),))

    def swapaxes(self, a1: int, a2: int) -> Tensor:
        return Tensor._from_op(
            np.swapaxes(self.data, a1, a2), (self,), lambda g: (np.swapaxes(g, a1, a2),)
        )

    def __getitem__(self, idx: Any) -> Tensor:
        shape = self.shape

        def _bw(g: np.ndarray) -> tuple[np.ndarray]:
            out = np.zeros(shape)
            np.add.at(out, idx, g)
            return (out,)

        return Tensor._from_op(self.data[idx], (self,), _bw)

    # -----------------
    # Elementwise functions
    # -----------------
    def exp(self) -> Tensor:
        e = np.exp(self.data)
        return Tensor._from_op(e, (self,), lambda g: (g * e,))

    def log(self) -> Tensor:
        a = self.data
        return Tensor._from_op(np.log(a), (self,), lambda g: (g / a,))

    def sqrt(self) -> Tensor:
        s = np.sqrt(self.data)
        return Tensor._from_op(s, (self,), lambda g: (g * 0.5 / s,))

    def tanh(self) -> Tensor:
        t = np.tanh(self.data)
        return Tensor._from_op(t, (self,), lambda g: (g * (1.0 - t * t),))

    def sigmoid(self) -> Tensor:
        s = _sigmoid(self.data)
        return Tensor._from_op(s, (self,), lambda g: (g * s * (1.0 - s),))

    def silu(self) -> Tensor:
        x = self.data
        s = _sigmoid(x)
        return Tensor._from_op(x * s, (self,), lambda g: (g * (s + x * s * (1.0 - s)),))

    def relu(self) -> Tensor:
        x = self.data
        return Tensor._from_op(np.maximum(x, 0.0), (self,), lambda g: (g * (x > 0.0),))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _lift(x: Any) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# -----------------
# Composite primitives
# -----------------
def softmax(x: Tensor, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    """
    Softmax along `axis`. Positions where `mask` is False receive exactly zero weight.
    A slice with no unmasked entry raises MaskingError.
    """
    a = x.data
    if mask is not None:
        m = np.broadcast_to(np.asarray(mask, dtype=bool), a.shape)
        if np.any(~np.any(m, axis=axis)):
            raise MaskingError("softmax over a fully masked row")
        shifted = np.where(m, a, -np.inf)
    else:
        m = None
        shifted = a
    mx = np.max(shifted, axis=axis, keepdims=True)
    e = np.exp(shifted - mx)
    if m is not None:
        e = np.where(m, e, 0.0)
    s = e / np.sum(e, axis=axis, keepdims=True)

    def _bw(g: np.ndarray) -> tuple[np.ndarray]:
        return (s * (g - np.sum(g * s, axis=axis, keepdims=True)),)

    return Tensor._from_op(s, (x,), _bw)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    a = x.data
    mx = np.max(a, axis=axis, keepdims=True)
    lse = mx + np.log(np.sum(np.exp(a - mx), axis=axis, keepdims=True))
    out = a - lse
    s = np.exp(out)

    def _bw(g: np.ndarray) -> tuple[np.ndarray]:
        return (g - s * np.sum(g, axis=axis, keepdims=True),)

    return Tensor._from_op(out, (x,), _bw)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    ts = [_lift(t) for t in tensors]
    sizes = [t.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def _bw(g: np.ndarray) -> list[np.ndarray]:
        return list(np.split(g, splits, axis=axis))

    return Tensor._from_op(np.concatenate([t.data for t in ts], axis=axis), ts, _bw)


def wrap(x: Tensor) -> Tensor:
    """Map onto [-pi, pi); the derivative is 1 almost everywhere."""
    a = x.data
    w = np.mod(a + math.pi, 2.0 * math.pi) - math.pi
    w = np.where(w >= math.pi, w - 2.0 * math.pi, w)
    return Tensor._from_op(w, (x,), lambda g: (g,))


def smooth_l1(d: Tensor, beta: float) -> Tensor:
    """Elementwise 0.5*d^2/beta for |d| < beta, |d| - 0.5*beta otherwise."""
    a = d.data
    inside = np.abs(a) < beta
    out = np.where(inside, 0.5 * a * a / beta, np.abs(a) - 0.5 * beta)
    return Tensor._from_op(out, (d,), lambda g: (g * np.where(inside, a / beta, np.sign(a)),))


# -----------------
# Gradient checking
# -----------------
def numerical_grad(loss_fn: Callable[[], Tensor], param: Tensor, step: float = 1e-4) -> np.ndarray:
    """Central-difference gradient of a scalar loss_fn() with respect to param.data."""
    grad = np.zeros_like(param.data)
    with no_grad():
        it = np.nditer(param.data, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = float(param.data[idx])
            param.data[idx] = orig + step
            f_plus = loss_fn().item()
            param.data[idx] = orig - step
            f_minus = loss_fn().item()
            param.data[idx] = orig
            grad[idx] = (f_plus - f_minus) / (2.0 * step)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """||a - b|| / (||a|| + ||b||), 0 when both vanish."""
    denom = float(np.linalg.norm(a) + np.linalg.norm(b))
    if denom < 1e-12:
        return 0.0
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / denom)


__all__ = [
    "Tensor",
    "no_grad",
    "softmax",
    "log_softmax",
    "concat",
    "wrap",
    "smooth_l1",
    "numerical_grad",
    "relative_error",
]
