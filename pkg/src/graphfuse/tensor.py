"""Dense float64 tensors with reverse-mode automatic differentiation.

A dynamic tape is rebuilt on every forward pass: each op returns a new
Tensor holding references to its parents and a closure implementing the
backward rule. Calling ``backward()`` on a scalar walks the tape in
reverse topological order and accumulates gradients into ``grad``
(accumulation, not overwrite; call ``zero_grad`` between steps).

Everything is float64. Broadcasting is supported for the elementwise
ops only, with gradients reduced back to the operand shapes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DimensionError

Array = np.ndarray


def _coerce(x) -> "Tensor":
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: Array, shape: tuple) -> Array:
    """Reduce a broadcast gradient back to the original operand shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """A float64 array plus optional gradient buffer and tape linkage."""

    __slots__ = ("values", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, values, requires_grad: bool = False):
        self.values = np.asarray(values, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Array | None = None
        self._parents: tuple = ()
        self._backward_fn = None

    @classmethod
    def _from_op(cls, values: Array, parents, backward_fn) -> "Tensor":
        out = cls(values, requires_grad=any(p.requires_grad for p in parents))
        if out.requires_grad:
            out._parents = tuple(parents)
            out._backward_fn = backward_fn
        return out

    # -- bookkeeping ---------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @property
    def size(self) -> int:
        return self.values.size

    def item(self) -> float:
        return float(self.values.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, grad: Array) -> None:
        if self.grad is None:
            self.grad = np.array(grad, dtype=np.float64, copy=True)
        else:
            self.grad += grad

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.values.shape}{flag})"

    # -- autodiff ------------------------------------------------------

    def backward(self) -> None:
        """Backpropagate from a scalar; populates grad on every
        requires_grad tensor reachable from this one."""
        if self.values.size != 1:
            raise ContractError(
                f"backward() needs a scalar loss, got shape {self.values.shape}"
            )
        if not self.requires_grad:
            return
        order = self._topo_order()
        self._accumulate(np.ones_like(self.values))
        for node in reversed(order):
            if node._backward_fn is not None:
                node._backward_fn(node.grad)

    def _topo_order(self) -> list:
        """Parents-first topological order of the requires_grad subgraph."""
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        return order

    # -- elementwise arithmetic ----------------------------------------

    def __add__(self, other):
        other = _coerce(other)
        out_values = self.values + other.values
        a, b = self, other

        def bw(grad):
            if a.requires_grad:
                a._accumulate(_unbroadcast(grad, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(grad, b.shape))

        return Tensor._from_op(out_values, (a, b), bw)

    __radd__ = __add__

    def __neg__(self):
        a = self

        def bw(grad):
            if a.requires_grad:
                a._accumulate(-grad)

        return Tensor._from_op(-self.values, (a,), bw)

    def __sub__(self, other):
        return self + (-_coerce(other))

    def __rsub__(self, other):
        return _coerce(other) + (-self)

    def __mul__(self, other):
        other = _coerce(other)
        a, b = self, other
        out_values = a.values * b.values

        def bw(grad):
            if a.requires_grad:
                a._accumulate(_unbroadcast(grad * b.values, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(grad * a.values, b.shape))

        return Tensor._from_op(out_values, (a, b), bw)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _coerce(other)
        a, b = self, other
        out_values = a.values / b.values

        def bw(grad):
            if a.requires_grad:
                a._accumulate(_unbroadcast(grad / b.values, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(-grad * out_values / b.values, b.shape))

        return Tensor._from_op(out_values, (a, b), bw)

    def __matmul__(self, other):
        return matmul(self, _coerce(other))

    # -- reductions ----------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        a = self
        out_values = a.values.sum(axis=axis, keepdims=keepdims)

        def bw(grad):
            if not a.requires_grad:
                return
            g = grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis=axis)
            a._accumulate(np.broadcast_to(g, a.shape))

        return Tensor._from_op(out_values, (a,), bw)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            count = self.values.size
        else:
            count = self.values.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)


# -- op functions --------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Standard 2D matrix product with the usual transpose backward rules."""
    a, b = _coerce(a), _coerce(b)
    if a.values.ndim != 2 or b.values.ndim != 2:
        raise DimensionError(
            f"matmul needs 2D operands, got {a.shape} @ {b.shape}"
        )
    if a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"matmul inner dimensions disagree: {a.shape} @ {b.shape}"
        )
    out_values = a.values @ b.values

    def bw(grad):
        if a.requires_grad:
            a._accumulate(grad @ b.values.T)
        if b.requires_grad:
            b._accumulate(a.values.T @ grad)

    return Tensor._from_op(out_values, (a, b), bw)


def concat(a: Tensor, b: Tensor, axis: int) -> Tensor:
    """Concatenate along one axis; backward splits the gradient."""
    a, b = _coerce(a), _coerce(b)
    sa, sb = list(a.shape), list(b.shape)
    if len(sa) != len(sb):
        raise DimensionError(f"concat rank mismatch: {a.shape} vs {b.shape}")
    for i, (da, db) in enumerate(zip(sa, sb)):
        if i != axis and da != db:
            raise DimensionError(
                f"concat shapes disagree off axis {axis}: {a.shape} vs {b.shape}"
            )
    out_values = np.concatenate([a.values, b.values], axis=axis)
    split = a.shape[axis]

    def bw(grad):
        ga, gb = np.split(grad, [split], axis=axis)
        if a.requires_grad:
            a._accumulate(ga)
        if b.requires_grad:
            b._accumulate(gb)

    return Tensor._from_op(out_values, (a, b), bw)


def exp(x: Tensor) -> Tensor:
    x = _coerce(x)
    y = np.exp(x.values)

    def bw(grad):
        if x.requires_grad:
            x._accumulate(grad * y)

    return Tensor._from_op(y, (x,), bw)


def log(x: Tensor) -> Tensor:
    x = _coerce(x)

    def bw(grad):
        if x.requires_grad:
            x._accumulate(grad / x.values)

    return Tensor._from_op(np.log(x.values), (x,), bw)


def sigmoid(x: Tensor) -> Tensor:
    x = _coerce(x)
    y = sigmoid_values(x.values)

    def bw(grad):
        if x.requires_grad:
            x._accumulate(grad * y * (1.0 - y))

    return Tensor._from_op(y, (x,), bw)


def softplus(x: Tensor) -> Tensor:
    """log(1 + e^x), computed without overflow."""
    x = _coerce(x)
    y = np.logaddexp(0.0, x.values)

    def bw(grad):
        if x.requires_grad:
            x._accumulate(grad * sigmoid_values(x.values))

    return Tensor._from_op(y, (x,), bw)


def silu(x: Tensor) -> Tensor:
    """x * sigmoid(x); zero at zero."""
    x = _coerce(x)
    s = sigmoid_values(x.values)
    y = x.values * s

    def bw(grad):
        if x.requires_grad:
            x._accumulate(grad * (s + x.values * s * (1.0 - s)))

    return Tensor._from_op(y, (x,), bw)


def leaky_relu(x: Tensor, slope: float) -> Tensor:
    """x for x > 0, slope * x otherwise; derivative at 0 is the slope."""
    if not 0.0 < slope < 1.0:
        raise ContractError(f"leaky_relu slope must lie in (0, 1), got {slope}")
    x = _coerce(x)
    factor = np.where(x.values > 0.0, 1.0, slope)

    def bw(grad):
        if x.requires_grad:
            x._accumulate(grad * factor)

    return Tensor._from_op(x.values * factor, (x,), bw)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stabilized softmax along one axis.

    The max subtraction uses detached values; softmax is shift invariant
    so the gradient is unaffected.
    """
    x = _coerce(x)
    shifted = x.values - x.values.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(grad):
        if x.requires_grad:
            inner = (grad * y).sum(axis=axis, keepdims=True)
            x._accumulate(y * (grad - inner))

    return Tensor._from_op(y, (x,), bw)


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous column slice of a 2D tensor; backward zero-pads."""
    x = _coerce(x)
    if x.values.ndim != 2:
        raise DimensionError(f"slice_cols needs a 2D tensor, got {x.shape}")
    out_values = x.values[:, start:stop].copy()

    def bw(grad):
        if x.requires_grad:
            g = np.zeros_like(x.values)
            g[:, start:stop] = grad
            x._accumulate(g)

    return Tensor._from_op(out_values, (x,), bw)


# -- row gather / segment sum --------------------------------------------


@dataclass(frozen=True)
class RowPlan:
    """Precomputed index plan shared by gather_rows and segment_sum.

    ``index`` maps each of E positions to one of ``rows`` target rows.
    The sort products let the scatter direction run as a reduceat
    instead of per-element accumulation.
    """

    index: Array
    rows: int
    order: Array
    starts: Array
    targets: Array
    sorted: bool


def make_row_plan(index, rows: int) -> RowPlan:
    idx = np.asarray(index, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= rows):
        raise ContractError(
            f"row index out of range [0, {rows}): min {idx.min()}, max {idx.max()}"
        )
    order = np.argsort(idx, kind="stable")
    sorted_idx = idx[order]
    targets, starts = np.unique(sorted_idx, return_index=True)
    return RowPlan(
        index=idx, rows=rows, order=order, starts=starts, targets=targets,
        sorted=bool(np.array_equal(order, np.arange(idx.size))),
    )


def _scatter_rows(grad: Array, plan: RowPlan, width: int) -> Array:
    out = np.zeros((plan.rows, width), dtype=np.float64)
    if plan.index.size:
        rows = grad if plan.sorted else grad[plan.order]
        sums = np.add.reduceat(rows, plan.starts, axis=0)
        out[plan.targets] = sums
    return out


def gather_rows(x: Tensor, plan: RowPlan) -> Tensor:
    """out[e] = x[plan.index[e]]; backward scatter-adds rows."""
    x = _coerce(x)
    if x.values.ndim != 2 or x.shape[0] != plan.rows:
        raise DimensionError(
            f"gather_rows expects ({plan.rows}, k), got {x.shape}"
        )
    out_values = x.values[plan.index]

    def bw(grad):
        if x.requires_grad:
            x._accumulate(_scatter_rows(grad, plan, x.shape[1]))

    return Tensor._from_op(out_values, (x,), bw)


def segment_sum(x: Tensor, plan: RowPlan) -> Tensor:
    """out[s] = sum of rows e with plan.index[e] == s; adjoint of gather_rows.

    Rows are added in the order they appear in x (stable), so outputs are
    reproducible. Segments with no member rows come out as zero rows.
    """
    x = _coerce(x)
    if x.values.ndim != 2 or x.shape[0] != plan.index.size:
        raise DimensionError(
            f"segment_sum expects ({plan.index.size}, k), got {x.shape}"
        )
    out_values = _scatter_rows(x.values, plan, x.shape[1])

    def bw(grad):
        if x.requires_grad:
            x._accumulate(grad[plan.index])

    return Tensor._from_op(out_values, (x,), bw)


# -- plain array helpers ---------------------------------------------------


def sigmoid_values(x: Array) -> Array:
    """Overflow-safe logistic function on raw arrays."""
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_scalar(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)
