"""Dense float64 tensors with tape-recorded reverse-mode gradients.

Operations executed inside a `Tape` context record how to push gradients back
to their inputs; outside a tape they only compute values. Tensors are vectors
or matrices; a scalar is a length-1 vector.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

_local = threading.local()


class ShapeError(ValueError):
    """Raised when operand shapes do not conform."""


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "is_leaf", "name")

    def __init__(self, value, *, requires_grad: bool = False, name: str = "") -> None:
        arr = np.array(value, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if arr.ndim > 2 or arr.size == 0:
            raise ShapeError(f"Tensor must be a non-empty vector or matrix, got {arr.shape}")
        self.value = arr
        self.requires_grad = requires_grad
        self.is_leaf = True
        self.grad = np.zeros_like(arr) if requires_grad else None
        self.name = name

    @classmethod
    def _result(cls, value: np.ndarray, requires_grad: bool) -> Tensor:
        out = cls.__new__(cls)
        out.value = value
        out.requires_grad = requires_grad
        out.is_leaf = False
        out.grad = None
        out.name = ""
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def size(self) -> int:
        return self.value.size

    def item(self) -> float:
        if self.value.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.value[0])

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad.fill(0.0)

    def numpy(self) -> np.ndarray:
        return self.value.copy()

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"


@dataclass
class _RowGrad:
    """Gradient touching a single row of a matrix."""

    row: int
    values: np.ndarray

    def dense(self, shape: tuple[int, ...]) -> np.ndarray:
        out = np.zeros(shape)
        out[self.row] = self.values
        return out


Backward = Callable[[np.ndarray], Sequence[Optional[object]]]


@dataclass
class _Record:
    out: Tensor
    inputs: tuple[Tensor, ...]
    backward: Backward


class Tape:
    """Records operations for one loss evaluation. Not shared across threads."""

    def __init__(self) -> None:
        self._records: list[_Record] = []

    def __enter__(self) -> Tape:
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        _stack().pop()

    def __len__(self) -> int:
        return len(self._records)

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], backward: Backward) -> None:
        self._records.append(_Record(out, inputs, backward))

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(leaf) into every trainable leaf's grad.

        Leaf gradients accumulate across calls: running backward twice without
        zeroing doubles them.
        """
        if loss.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss.is_leaf:
            if loss.requires_grad:
                loss.grad += 1.0
            return

        pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
        for rec in reversed(self._records):
            g = pending.pop(id(rec.out), None)
            if g is None:
                continue
            for tensor, gi in zip(rec.inputs, rec.backward(g)):
                if gi is None or not tensor.requires_grad:
                    continue
                if tensor.is_leaf:
                    if isinstance(gi, _RowGrad):
                        tensor.grad[gi.row] += gi.values
                    else:
                        tensor.grad += gi
                    continue
                if isinstance(gi, _RowGrad):
                    gi = gi.dense(tensor.shape)
                prev = pending.get(id(tensor))
                pending[id(tensor)] = gi if prev is None else prev + gi


def _stack() -> list[Tape]:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def current_tape() -> Optional[Tape]:
    stack = _stack()
    return stack[-1] if stack else None


def backward(loss: Tensor, tape: Optional[Tape] = None) -> None:
    tape = tape or current_tape()
    if tape is None:
        raise RuntimeError("backward() called outside of a Tape")
    tape.backward(loss)


def op(value: np.ndarray, inputs: tuple[Tensor, ...], grad_fn: Backward) -> Tensor:
    """Wrap an op result and record it when a tape is active and any input is trainable."""
    tape = current_tape()
    track = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor._result(value, track)
    if track:
        tape.record(out, inputs, grad_fn)
    return out


def constant(value) -> Tensor:
    return Tensor(value)


def zeros(n: int) -> Tensor:
    return Tensor(np.zeros(n))


# ── Shape checks ───────────────────────────────────────


def _same_shape(opname: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{opname}: shape mismatch {a.shape} vs {b.shape}")


def _vector(opname: str, a: Tensor) -> None:
    if a.value.ndim != 1:
        raise ShapeError(f"{opname}: expected a vector, got shape {a.shape}")


# ── Operations ─────────────────────────────────────────


def matvec(w: Tensor, x: Tensor) -> Tensor:
    if w.value.ndim != 2 or x.value.ndim != 1 or w.shape[1] != x.shape[0]:
        raise ShapeError(f"matvec: cannot multiply W{w.shape} by x{x.shape}")
    wv, xv = w.value, x.value
    return op(wv @ xv, (w, x), lambda g: (np.outer(g, xv), wv.T @ g))


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return op(a.value + b.value, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    return op(a.value - b.value, (a, b), lambda g: (g, -g))


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("hadamard", a, b)
    av, bv = a.value, b.value
    return op(av * bv, (a, b), lambda g: (g * bv, g * av))


def abs(a: Tensor) -> Tensor:  # noqa: A001
    sign = np.sign(a.value)
    return op(np.abs(a.value), (a,), lambda g: (g * sign,))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return op(a.value * c, (a,), lambda g: (g * c,))


def concat(a: Tensor, b: Tensor) -> Tensor:
    _vector("concat", a)
    _vector("concat", b)
    n = a.shape[0]
    return op(np.concatenate([a.value, b.value]), (a, b), lambda g: (g[:n], g[n:]))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -x))


def sigmoid(a: Tensor) -> Tensor:
    s = _sigmoid(a.value)
    return op(s, (a,), lambda g: (g * s * (1.0 - s),))


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.value)
    return op(t, (a,), lambda g: (g * (1.0 - t * t),))


def relu(a: Tensor) -> Tensor:
    mask = a.value > 0
    return op(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))


def softplus(a: Tensor) -> Tensor:
    """log(1 + exp(a)), overflow-safe."""
    s = _sigmoid(a.value)
    return op(np.logaddexp(0.0, a.value), (a,), lambda g: (g * s,))


def total(a: Tensor) -> Tensor:
    """Sum of all elements as a scalar tensor."""
    shape = a.shape
    return op(np.array([a.value.sum()]), (a,), lambda g: (np.full(shape, g[0]),))


def row(table: Tensor, index: int) -> Tensor:
    """Row lookup (embedding gather). Gradient touches only that row."""
    if table.value.ndim != 2:
        raise ShapeError(f"row: expected a matrix, got shape {table.shape}")
    if not 0 <= index < table.shape[0]:
        raise IndexError(f"row {index} out of range for table {table.shape}")
    return op(table.value[index].copy(), (table,), lambda g: (_RowGrad(index, g),))
