"""Minimal define-by-run reverse-mode autodiff over dense float64 arrays.

Every operation applied to tensors is appended to a :class:`Tape`. Calling
:meth:`Tape.backward` on a scalar result replays the tape in reverse and
accumulates gradients into every tensor the result depends on.

    >>> with Tape() as tape:
    ...     x = Tensor([3.0])
    ...     y = sum_(mul(x, x))
    ...     tape.backward(y)
    >>> x.grad
    array([6.])
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ShapeError, TapeError

OP_KINDS = frozenset(
    {
        "matmul",
        "add",
        "mul_elementwise",
        "scalar_mul",
        "relu",
        "log_softmax",
        "sum",
        "mean",
        "select_index",
    }
)

_local = threading.local()


def _tape_stack() -> list:
    if not hasattr(_local, "stack"):
        _local.stack = []
    return _local.stack


def active_tape() -> Tape | None:
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """A float64 array plus a gradient slot and its position on a tape."""

    __slots__ = ("data", "grad", "requires_grad", "tape", "node_id")

    def __init__(self, data, requires_grad: bool = True):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if arr.size == 0 or 0 in arr.shape:
            raise ShapeError(f"tensor must be non-empty, got shape {arr.shape}")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.tape: Tape | None = None
        self.node_id: int | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, node_id={self.node_id})"

    def __add__(self, other: Tensor) -> Tensor:
        return add(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scalar_mul(self, float(other))

    __rmul__ = __mul__

    def __matmul__(self, other: Tensor) -> Tensor:
        return matmul(self, other)

    def __neg__(self) -> Tensor:
        return scalar_mul(self, -1.0)


BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


@dataclass
class _Record:
    kind: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn


class Tape:
    """Ordered log of operations; supports one backward pass per reset."""

    def __init__(self):
        self.nodes: list[Tensor] = []
        self.records: list[_Record] = []
        self._backward_done = False

    def __enter__(self) -> Tape:
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()
        else:  # pragma: no cover - misuse of nested contexts
            raise TapeError("tape context exited out of order")

    def register(self, t: Tensor) -> None:
        if t.tape is self:
            return
        if t.tape is not None:
            raise TapeError(f"{t!r} already belongs to another tape")
        t.tape = self
        t.node_id = len(self.nodes)
        self.nodes.append(t)

    def record(self, kind: str, inputs: Sequence[Tensor], output: Tensor, backward: BackwardFn) -> None:
        if self._backward_done:
            raise TapeError("cannot record on a tape after backward(); call reset() first")
        for t in inputs:
            self.register(t)
        self.register(output)
        self.records.append(_Record(kind, tuple(inputs), output, backward))

    def backward(self, root: Tensor) -> None:
        if root.tape is not self:
            raise TapeError("backward root is not on this tape")
        if root.data.size != 1:
            raise ShapeError(f"backward root must be scalar, got shape {root.shape}")
        if self._backward_done:
            raise TapeError("backward already run on this tape; call reset() first")
        self._backward_done = True
        root.grad = np.ones_like(root.data)
        for rec in reversed(self.records):
            g = rec.output.grad
            if g is None:
                continue
            for inp, gi in zip(rec.inputs, rec.backward(g)):
                if gi is None or not inp.requires_grad:
                    continue
                if inp.grad is None:
                    inp.grad = np.array(gi, dtype=np.float64)
                else:
                    inp.grad += gi

    def reset(self) -> None:
        """Clear gradients so backward can run again on the same graph."""
        for t in self.nodes:
            t.grad = None
        self._backward_done = False


def _resolve_tape(inputs: Sequence[Tensor]) -> Tape:
    tape = None
    for t in inputs:
        if t.tape is not None:
            if tape is not None and t.tape is not tape:
                raise TapeError("inputs belong to different tapes")
            tape = t.tape
    if tape is None:
        tape = active_tape()
    if tape is None:
        raise TapeError("no active tape; wrap the computation in `with Tape():`")
    return tape


def _shape_error(kind: str, a, b) -> ShapeError:
    return ShapeError(f"{kind}: incompatible shapes {tuple(a)} and {tuple(b)}")


def forward_op(op_kind: str, inputs: Sequence[Tensor], **attrs) -> Tensor:
    """Apply ``op_kind`` to ``inputs`` and record it on the tape.

    ``scalar_mul`` takes ``scalar=<float>``; ``select_index`` takes
    ``indices=<int array>`` picking one column per row.
    """
    if op_kind not in OP_KINDS:
        raise ValueError(f"unknown op kind {op_kind!r}")
    inputs = tuple(inputs)
    for t in inputs:
        if not isinstance(t, Tensor):
            raise TypeError(f"{op_kind}: expected Tensor inputs, got {type(t).__name__}")
        if t.data.size == 0:
            raise ShapeError(f"{op_kind}: empty tensor input")
    tape = _resolve_tape(inputs)
    out_data, backward = _KERNELS[op_kind](inputs, attrs)
    out = Tensor(out_data)
    tape.record(op_kind, inputs, out, backward)
    return out


def _arity(kind: str, inputs, n: int) -> None:
    if len(inputs) != n:
        raise ValueError(f"{kind} takes {n} input(s), got {len(inputs)}")


def _k_matmul(inputs, attrs):
    _arity("matmul", inputs, 2)
    a, b = inputs[0].data, inputs[1].data
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise _shape_error("matmul", a.shape, b.shape)

    need_a, need_b = inputs[0].requires_grad, inputs[1].requires_grad

    def backward(g):
        return (g @ b.T if need_a else None), (a.T @ g if need_b else None)

    return a @ b, backward


def _k_add(inputs, attrs):
    _arity("add", inputs, 2)
    a, b = inputs[0].data, inputs[1].data
    if a.shape == b.shape:
        return a + b, lambda g: (g, g)
    # bias-add: (m, n) + (n,)
    if a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]:
        return a + b, lambda g: (g, g.sum(axis=0))
    raise _shape_error("add", a.shape, b.shape)


def _k_mul(inputs, attrs):
    _arity("mul_elementwise", inputs, 2)
    a, b = inputs[0].data, inputs[1].data
    if a.shape != b.shape:
        raise _shape_error("mul_elementwise", a.shape, b.shape)
    return a * b, lambda g: (g * b, g * a)


def _k_scalar_mul(inputs, attrs):
    _arity("scalar_mul", inputs, 1)
    c = float(attrs["scalar"])
    return c * inputs[0].data, lambda g: (c * g,)


def _k_relu(inputs, attrs):
    _arity("relu", inputs, 1)
    a = inputs[0].data
    mask = a > 0
    # np.maximum propagates NaN, so a poisoned input still surfaces in the loss
    return np.maximum(a, 0.0), lambda g: (g * mask,)


def _k_log_softmax(inputs, attrs):
    _arity("log_softmax", inputs, 1)
    a = inputs[0].data
    shifted = a - a.max(axis=-1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    probs = np.exp(out)

    def backward(g):
        return (g - probs * g.sum(axis=-1, keepdims=True),)

    return out, backward


def _k_sum(inputs, attrs):
    _arity("sum", inputs, 1)
    a = inputs[0].data
    return np.array([a.sum()]), lambda g: (np.full(a.shape, g[0]),)


def _k_mean(inputs, attrs):
    _arity("mean", inputs, 1)
    a = inputs[0].data
    n = a.size
    return np.array([a.sum() / n]), lambda g: (np.full(a.shape, g[0] / n),)


def _k_select_index(inputs, attrs):
    _arity("select_index", inputs, 1)
    a = inputs[0].data
    idx = np.asarray(attrs["indices"], dtype=np.intp)
    if a.ndim != 2 or idx.shape != (a.shape[0],):
        raise _shape_error("select_index", a.shape, idx.shape)
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[1]):
        raise ShapeError(f"select_index: index out of range for shape {a.shape}")
    rows = np.arange(a.shape[0])

    def backward(g):
        out = np.zeros_like(a)
        out[rows, idx] = g
        return (out,)

    return a[rows, idx].copy(), backward


_KERNELS = {
    "matmul": _k_matmul,
    "add": _k_add,
    "mul_elementwise": _k_mul,
    "scalar_mul": _k_scalar_mul,
    "relu": _k_relu,
    "log_softmax": _k_log_softmax,
    "sum": _k_sum,
    "mean": _k_mean,
    "select_index": _k_select_index,
}


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return forward_op("matmul", (a, b))


def add(a: Tensor, b: Tensor) -> Tensor:
    return forward_op("add", (a, b))


def mul(a: Tensor, b: Tensor) -> Tensor:
    return forward_op("mul_elementwise", (a, b))


def scalar_mul(a: Tensor, c: float) -> Tensor:
    return forward_op("scalar_mul", (a,), scalar=c)


def relu(a: Tensor) -> Tensor:
    return forward_op("relu", (a,))


def log_softmax(a: Tensor) -> Tensor:
    return forward_op("log_softmax", (a,))


def sum_(a: Tensor) -> Tensor:
    return forward_op("sum", (a,))


def mean(a: Tensor) -> Tensor:
    return forward_op("mean", (a,))


def select_index(a: Tensor, indices) -> Tensor:
    return forward_op("select_index", (a,), indices=indices)


def backward(root: Tensor) -> None:
    """Backpropagate from a scalar tensor through the tape it lives on."""
    if root.tape is None:
        raise TapeError("backward root is not on any tape")
    root.tape.backward(root)
