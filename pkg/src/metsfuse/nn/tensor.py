"""Tensor values and the gradient tape.

A Tensor is a dense float64 array plus a requires_grad flag. Operations
from metsfuse.nn.ops record themselves on the active Tape whenever any
input requires gradients; replaying the tape in reverse yields gradients
for every leaf parameter, summed over all uses.

A tape and the tensors recorded on it belong to one thread; independent
tapes (one per training run) may run concurrently.
"""
from __future__ import annotations

import itertools
import threading

import numpy as np


class ShapeError(ValueError):
    """Operand shapes do not conform to the operation's signature."""


class NonFiniteError(ArithmeticError):
    """A NaN or infinity reached an operation input or gradient."""


_ids = itertools.count()


class Tensor:
    """Dense float64 array, row-major, optionally tracked for gradients."""

    __slots__ = ("data", "requires_grad", "name", "id")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.name = name
        self.id = next(_ids)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    # Arithmetic sugar; the implementations live in metsfuse.nn.ops and are
    # attached there to avoid a circular import.


class _TapeEntry:
    __slots__ = ("out", "inputs", "backward")

    def __init__(self, out: Tensor, inputs: tuple[Tensor, ...], backward):
        self.out = out
        self.inputs = inputs
        self.backward = backward


_active = threading.local()


def _tape_stack() -> list:
    stack = getattr(_active, "stack", None)
    if stack is None:
        stack = []
        _active.stack = stack
    return stack


def active_tape() -> "Tape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tape:
    """Ordered record of operations, replayed backward for gradients."""

    def __init__(self):
        self._entries: list[_TapeEntry] = []
        self._produced: set[int] = set()

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        popped = _tape_stack().pop()
        assert popped is self

    def __len__(self) -> int:
        return len(self._entries)

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], backward) -> None:
        self._entries.append(_TapeEntry(out, inputs, backward))
        self._produced.add(out.id)

    def backward(
        self, loss: Tensor, params: "list[Tensor] | None" = None
    ) -> dict[Tensor, np.ndarray]:
        """Gradients of a scalar loss for every leaf parameter on the tape.

        Entries were appended in execution order, so reversed iteration is a
        reverse topological walk; a tensor used several times accumulates the
        sum of its path gradients. Returns a map keyed by leaf tensors
        (requires_grad inputs that no tape entry produced); tensors listed in
        ``params`` but unreachable from the loss map to zeros.
        """
        if loss.data.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {loss.id: np.ones_like(loss.data)}
        leaves: dict[int, Tensor] = {}
        for entry in reversed(self._entries):
            out_grad = grads.get(entry.out.id)
            if out_grad is None:
                continue
            in_grads = entry.backward(out_grad)
            for tensor, g in zip(entry.inputs, in_grads):
                if g is None:
                    continue
                acc = grads.get(tensor.id)
                if acc is None:
                    grads[tensor.id] = np.array(g, dtype=np.float64, copy=True)
                else:
                    acc += g
                if tensor.requires_grad and tensor.id not in self._produced:
                    leaves[tensor.id] = tensor
        result = {t: grads[i] for i, t in leaves.items()}
        if loss.requires_grad and loss.id not in self._produced:
            result[loss] = np.ones_like(loss.data)
        if params is not None:
            for p in params:
                if p not in result:
                    result[p] = np.zeros_like(p.data)
        return result
