"""Dense arrays with reverse-mode automatic differentiation.

A :class:`DiffTensor` wraps a numpy array. Operations on tensors that
require gradients record their inputs and a closure mapping the output
gradient to input gradients; :meth:`DiffTensor.backward` walks that record
in reverse topological order.
"""

from __future__ import annotations

from typing import Callable, Iterable, Optional, Sequence, Tuple

import numpy as np

DEFAULT_DTYPE = np.float32

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


def acc_sum(a: np.ndarray, axis=None, keepdims: bool = False) -> np.ndarray:
    """Sum with 64-bit accumulation, cast back to the input precision."""
    return np.asarray(a.sum(axis=axis, dtype=np.float64, keepdims=keepdims), dtype=a.dtype)


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Reduce ``grad`` onto ``shape`` by summing over broadcast axes."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = acc_sum(grad, axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = acc_sum(grad, axis=axes, keepdims=True)
    return grad.reshape(shape)


class DiffTensor:
    """A node in the differentiation graph.

    ``values`` holds the data; ``grad`` is populated on leaves that require
    gradients after :meth:`backward`. Non-leaf gradients are not retained.
    """

    __array_priority__ = 100

    def __init__(self, values, requires_grad: bool = False, dtype=None, name: Optional[str] = None):
        arr = np.asarray(values, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(DEFAULT_DTYPE)
        self.values: np.ndarray = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents: Tuple[DiffTensor, ...] = ()
        self._backward: Optional[BackwardFn] = None

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def dtype(self):
        return self.values.dtype

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def numpy(self) -> np.ndarray:
        return self.values

    def item(self) -> float:
        return float(self.values.reshape(-1)[0]) if self.values.size == 1 else float(self.values)

    def detach(self) -> "DiffTensor":
        return DiffTensor(self.values)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.values)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"DiffTensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __len__(self) -> int:
        return self.shape[0]

    # -- graph ------------------------------------------------------------
    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``."""
        if self.values.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            return
        order = _topological_order(self)
        pending = {id(self): np.ones_like(self.values)}
        for node in reversed(order):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if node.is_leaf:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in pending:
                    pending[key] = pending[key] + pg
                else:
                    pending[key] = pg

    # -- operators --------------------------------------------------------
    def _lift(self, other) -> "DiffTensor":
        if isinstance(other, DiffTensor):
            return other
        return DiffTensor(np.asarray(other, dtype=self.dtype))

    def __add__(self, other):
        return add(self, self._lift(other))

    def __radd__(self, other):
        return add(self._lift(other), self)

    def __sub__(self, other):
        return sub(self, self._lift(other))

    def __rsub__(self, other):
        return sub(self._lift(other), self)

    def __mul__(self, other):
        return mul(self, self._lift(other))

    def __rmul__(self, other):
        return mul(self._lift(other), self)

    def __truediv__(self, other):
        return div(self, self._lift(other))

    def __rtruediv__(self, other):
        return div(self._lift(other), self)

    def __neg__(self):
        return make(-self.values, (self,), lambda g: (-g,))

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, self._lift(other))

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return tmean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def exp(self):
        return texp(self)

    def log(self):
        return tlog(self)


def _topological_order(root: DiffTensor) -> list:
    order, seen = [], set()
    stack = [(root, False)]
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
    return order


def make(values: np.ndarray, parents: Iterable[DiffTensor], backward: BackwardFn) -> DiffTensor:
    """Create an op output; the backward closure is kept only if needed."""
    parents = tuple(parents)
    out = DiffTensor(values)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def as_tensor(x, dtype=None) -> DiffTensor:
    if isinstance(x, DiffTensor):
        return x
    return DiffTensor(x, dtype=dtype)


# -- elementwise arithmetic --------------------------------------------------

def add(a: DiffTensor, b: DiffTensor) -> DiffTensor:
    return make(
        a.values + b.values,
        (a, b),
        lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)),
    )


def sub(a: DiffTensor, b: DiffTensor) -> DiffTensor:
    return make(
        a.values - b.values,
        (a, b),
        lambda g: (unbroadcast(g, a.shape), unbroadcast(-g, b.shape)),
    )


def mul(a: DiffTensor, b: DiffTensor) -> DiffTensor:
    def backward(g):
        ga = unbroadcast(g * b.values, a.shape) if a.requires_grad else None
        gb = unbroadcast(g * a.values, b.shape) if b.requires_grad else None
        return ga, gb

    return make(a.values * b.values, (a, b), backward)


def div(a: DiffTensor, b: DiffTensor) -> DiffTensor:
    out = a.values / b.values

    def backward(g):
        ga = unbroadcast(g / b.values, a.shape) if a.requires_grad else None
        gb = unbroadcast(-g * out / b.values, b.shape) if b.requires_grad else None
        return ga, gb

    return make(out, (a, b), backward)


def power(a: DiffTensor, exponent: float) -> DiffTensor:
    return make(
        a.values ** exponent,
        (a,),
        lambda g: (g * exponent * a.values ** (exponent - 1),),
    )


def texp(a: DiffTensor) -> DiffTensor:
    out = np.exp(a.values)
    return make(out, (a,), lambda g: (g * out,))


def tlog(a: DiffTensor) -> DiffTensor:
    return make(np.log(a.values), (a,), lambda g: (g / a.values,))


# -- reductions and shape ops -------------------------------------------------

def _normalize_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def tsum(a: DiffTensor, axis=None, keepdims: bool = False) -> DiffTensor:
    axes = _normalize_axes(axis, a.ndim)
    out = acc_sum(a.values, axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    return make(out, (a,), backward)


def tmean(a: DiffTensor, axis=None, keepdims: bool = False) -> DiffTensor:
    axes = _normalize_axes(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    return tsum(a, axes, keepdims) * (1.0 / count)


def reshape(a: DiffTensor, shape) -> DiffTensor:
    return make(a.values.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: DiffTensor, axes=None) -> DiffTensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(axes))
    return make(
        np.ascontiguousarray(a.values.transpose(axes)),
        (a,),
        lambda g: (g.transpose(inverse),),
    )


def getitem(a: DiffTensor, index) -> DiffTensor:
    def backward(g):
        full = np.zeros_like(a.values)
        np.add.at(full, index, g)
        return (full,)

    return make(np.array(a.values[index]), (a,), backward)


def concat(tensors: Sequence[DiffTensor], axis: int = 0) -> DiffTensor:
    tensors = list(tensors)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return make(np.concatenate([t.values for t in tensors], axis=axis), tensors, backward)


def matmul(a: DiffTensor, b: DiffTensor) -> DiffTensor:
    """Batched matrix product with numpy broadcasting over leading axes."""
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs at least 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")

    def backward(g):
        ga = unbroadcast(g @ np.swapaxes(b.values, -1, -2), a.shape) if a.requires_grad else None
        gb = unbroadcast(np.swapaxes(a.values, -1, -2) @ g, b.shape) if b.requires_grad else None
        return ga, gb

    return make(a.values @ b.values, (a, b), backward)
