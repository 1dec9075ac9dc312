"""Dense tensors and the recording tape used for reverse-mode gradients."""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

_DTYPES = {32: np.float32, 64: np.float64}
_precision = 32
_tape_stack: list["Tape"] = []


def set_precision(bits: int) -> None:
    """Select the float width used for new tensors (32 for training, 64 for checks)."""
    global _precision
    if bits not in _DTYPES:
        raise ValueError(f"precision must be 32 or 64, got {bits}")
    _precision = bits


def get_precision() -> int:
    return _precision


def default_dtype() -> type:
    return _DTYPES[_precision]


@contextmanager
def precision(bits: int) -> Iterator[None]:
    previous = _precision
    set_precision(bits)
    try:
        yield
    finally:
        set_precision(previous)


class Tensor:
    """A numpy array plus an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "node_id", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None,
                 dtype=None):
        arr = np.asarray(data, dtype=dtype or default_dtype())
        if not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.node_id: Optional[int] = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        self.grad = None

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"


class _Record:
    __slots__ = ("name", "inputs", "output", "backward")

    def __init__(self, name: str, inputs: Sequence[Tensor], output: Tensor,
                 backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]):
        self.name = name
        self.inputs = tuple(inputs)
        self.output = output
        self.backward = backward


class Tape:
    """Ordered record of primitive applications.

    Operations executed while a tape is active (``with Tape() as tape:``) are
    appended in execution order, which is already a topological order; the
    backward pass walks the records once, in reverse.
    """

    def __init__(self) -> None:
        self.records: list[_Record] = []
        self._grads: dict[int, np.ndarray] = {}

    def __enter__(self) -> "Tape":
        _tape_stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _tape_stack.pop()

    def __len__(self) -> int:
        return len(self.records)

    def record(self, name, inputs, output, backward) -> None:
        output.node_id = len(self.records)
        self.records.append(_Record(name, inputs, output, backward))

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf requiring grad."""
        if loss.data.size != 1:
            raise ValueError("backward expects a scalar loss")
        if not np.isfinite(loss.data).all():
            raise FloatingPointError("non-finite loss")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for rec in reversed(self.records):
            g_out = grads.pop(id(rec.output), None)
            if g_out is None:
                continue
            g_inputs = rec.backward(g_out)
            for t, g in zip(rec.inputs, g_inputs):
                if g is None or not t.requires_grad:
                    continue
                key = id(t)
                if key in grads:
                    grads[key] = grads[key] + g
                else:
                    grads[key] = g
        # whatever remains are leaves (parameters and inputs)
        for rec in self.records:
            for t in rec.inputs:
                g = grads.pop(id(t), None)
                if g is None:
                    continue
                t.grad = g if t.grad is None else t.grad + g


def active_tape() -> Optional[Tape]:
    return _tape_stack[-1] if _tape_stack else None


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)
