"""Reverse-mode automatic differentiation over float64 numpy arrays.

Only the operations the sequence models need are provided. Every op checks its
forward value for NaN/inf and raises :class:`NumericError` instead of letting
non-finite values propagate.
"""

from __future__ import annotations

import contextlib

import numpy as np

from ..errors import NumericError

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording (inference, finite differences)."""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _is_basic_index(key) -> bool:
    keys = key if isinstance(key, tuple) else (key,)
    return all(isinstance(k, (int, slice, type(None), type(Ellipsis))) for k in keys)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self.name = name

    # construction ---------------------------------------------------------

    @staticmethod
    def _make(data, parents, backward, op: str) -> "Tensor":
        if not np.all(np.isfinite(data)):
            raise NumericError(f"non-finite value produced by '{op}'")
        out = Tensor(data)
        if _GRAD_ENABLED and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
        return out

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # gradient bookkeeping -------------------------------------------------

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad=None) -> None:
        """Accumulate d(self)/d(leaf) into every leaf's ``.grad``."""
        if grad is None:
            if self.size != 1:
                raise NumericError("backward() without a seed needs a scalar output")
            grad = np.ones_like(self.data)
        order: list[Tensor] = []
        visited: set[int] = set()
        stack = [(self, False)]
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
        grads = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node._accumulate(g)
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = pg

    # arithmetic -----------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        a, b = self.shape, other.shape
        return Tensor._make(
            self.data + other.data,
            (self, other),
            lambda g: (_unbroadcast(g, a), _unbroadcast(g, b)),
            "add",
        )

    __radd__ = __add__

    def __sub__(self, other):
        other = as_tensor(other)
        a, b = self.shape, other.shape
        return Tensor._make(
            self.data - other.data,
            (self, other),
            lambda g: (_unbroadcast(g, a), _unbroadcast(-g, b)),
            "sub",
        )

    def __rsub__(self, other):
        return as_tensor(other) - self

    def __neg__(self):
        return Tensor._make(-self.data, (self,), lambda g: (-g,), "neg")

    def __mul__(self, other):
        other = as_tensor(other)
        x, y = self.data, other.data
        return Tensor._make(
            x * y,
            (self, other),
            lambda g: (_unbroadcast(g * y, x.shape), _unbroadcast(g * x, y.shape)),
            "mul",
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return self * other.pow(-1.0)
        return self * (1.0 / float(other))

    def pow(self, exponent: float):
        x = self.data
        return Tensor._make(
            x**exponent, (self,), lambda g: (g * exponent * x ** (exponent - 1),), "pow"
        )

    def __matmul__(self, other):
        other = as_tensor(other)
        x, y = self.data, other.data
        return Tensor._make(x @ y, (self, other), lambda g: (g @ y.T, x.T @ g), "matmul")

    # elementwise ----------------------------------------------------------

    def tanh(self):
        t = np.tanh(self.data)
        return Tensor._make(t, (self,), lambda g: (g * (1.0 - t * t),), "tanh")

    def sigmoid(self):
        s = 0.5 * (np.tanh(0.5 * self.data) + 1.0)
        return Tensor._make(s, (self,), lambda g: (g * s * (1.0 - s),), "sigmoid")

    def relu(self):
        mask = self.data > 0
        return Tensor._make(self.data * mask, (self,), lambda g: (g * mask,), "relu")

    def exp(self):
        e = np.exp(self.data)
        return Tensor._make(e, (self,), lambda g: (g * e,), "exp")

    def log(self):
        x = self.data
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.log(x)
        return Tensor._make(out, (self,), lambda g: (g / x,), "log")

    def abs(self):
        sign = np.sign(self.data)
        return Tensor._make(np.abs(self.data), (self,), lambda g: (g * sign,), "abs")

    # reductions and reshaping ---------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        shape = self.shape

        def back(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return Tensor._make(self.data.sum(axis=axis, keepdims=keepdims), (self,), back, "sum")

    def mean(self, axis=None, keepdims: bool = False):
        n = self.size if axis is None else np.prod([self.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(n))

    def reshape(self, *shape):
        old = self.shape
        return Tensor._make(
            self.data.reshape(*shape), (self,), lambda g: (g.reshape(old),), "reshape"
        )

    @property
    def T(self):
        return Tensor._make(self.data.T, (self,), lambda g: (g.T,), "transpose")

    def __getitem__(self, key):
        shape = self.shape
        basic = _is_basic_index(key)

        def back(g):
            full = np.zeros(shape)
            if basic:
                full[key] += g
            else:
                np.add.at(full, key, g)
            return (full,)

        return Tensor._make(self.data[key], (self,), back, "index")


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]
    return Tensor._make(
        np.concatenate([t.data for t in tensors], axis=axis),
        tuple(tensors),
        lambda g: tuple(np.split(g, cuts, axis=axis)),
        "concat",
    )


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    n = len(tensors)
    return Tensor._make(
        np.stack([t.data for t in tensors], axis=axis),
        tuple(tensors),
        lambda g: tuple(np.take(g, i, axis=axis) for i in range(n)),
        "stack",
    )


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)
    return Tensor._make(
        s, (x,), lambda g: (s * (g - (g * s).sum(axis=axis, keepdims=True)),), "softmax"
    )


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    s = np.exp(out)
    return Tensor._make(
        out, (x,), lambda g: (g - s * g.sum(axis=axis, keepdims=True),), "log_softmax"
    )
