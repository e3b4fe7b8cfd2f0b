"""Tensor, Parameter and Tape: the reverse-mode core of the kernel.

Tensors wrap numpy arrays and are treated as immutable values. Operations
executed while a :class:`Tape` is active are recorded in order; replaying the
record backwards accumulates adjoints. Outside a tape nothing is recorded, so
inference pays no bookkeeping cost.
"""

from __future__ import annotations

import contextlib
import threading
from typing import Callable, Iterator, Sequence

import numpy as np

_state = threading.local()


class DimensionError(ValueError):
    """Raised when operand shapes do not agree."""


class ContractViolation(RuntimeError):
    """Raised when an operation's precondition does not hold."""


def _get(name, default):
    return getattr(_state, name, default)


def default_dtype() -> np.dtype:
    return _get("dtype", np.dtype(np.float32))


def set_default_dtype(dtype) -> None:
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"unsupported dtype {dtype}")
    _state.dtype = dtype


@contextlib.contextmanager
def precision(dtype) -> Iterator[None]:
    """Temporarily switch the default float dtype (e.g. float64 for grad checks)."""
    old = default_dtype()
    set_default_dtype(dtype)
    try:
        yield
    finally:
        _state.dtype = old


def checked_mode() -> bool:
    return _get("checked", False)


@contextlib.contextmanager
def checked(enabled: bool = True) -> Iterator[None]:
    """Raise FloatingPointError as soon as any op produces NaN or Inf."""
    old = checked_mode()
    _state.checked = enabled
    try:
        yield
    finally:
        _state.checked = old


class Tensor:
    __slots__ = ("data", "requires_grad", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype or default_dtype())
        if arr.ndim == 0:
            arr = arr.reshape(())
        self.data = arr
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def values(self) -> np.ndarray:
        """Flat row-major view of the values."""
        return self.data.reshape(-1)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype})"

    # Operator sugar; the implementations live in ops.
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from . import ops
        return ops.getitem(self, index)


class Parameter(Tensor):
    """A named, trainable tensor with an accumulating gradient buffer."""

    __slots__ = ("name", "grad")

    def __init__(self, data, name: str, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.name = name
        self.grad = np.zeros_like(self.data)

    @property
    def tensor(self) -> Tensor:
        return self

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def assign(self, values) -> None:
        values = np.asarray(values, dtype=self.data.dtype)
        if values.shape != self.data.shape:
            raise DimensionError(
                f"cannot assign shape {values.shape} to parameter {self.name} of shape {self.data.shape}"
            )
        self.data = values.copy()
        if self.grad.dtype != self.data.dtype:
            self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Tape:
    """Ordered record of the differentiable ops of one forward pass."""

    def __init__(self):
        self.records: list[tuple[Tensor, tuple[Tensor, ...], BackwardFn]] = []
        self._prev: Tape | None = None

    def __enter__(self) -> "Tape":
        self._prev = _get("tape", None)
        _state.tape = self
        return self

    def __exit__(self, *exc) -> None:
        _state.tape = self._prev

    def __len__(self) -> int:
        return len(self.records)

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], backward: BackwardFn) -> None:
        self.records.append((out, inputs, backward))

    def backward(self, loss: Tensor, seed: np.ndarray | None = None, on_visit=None) -> None:
        """Replay the record in reverse, adding adjoints into ``Parameter.grad``.

        Gradients accumulate across calls; zero them explicitly between steps.
        """
        if seed is None:
            if loss.data.size != 1:
                raise ContractViolation("backward without a seed needs a scalar loss")
            seed = np.ones_like(loss.data)
        adjoints: dict[int, np.ndarray] = {id(loss): np.asarray(seed, dtype=loss.dtype)}
        for out, inputs, fn in reversed(self.records):
            g = adjoints.pop(id(out), None)
            if on_visit is not None:
                on_visit(out)
            if g is None:
                continue
            for inp, gi in zip(inputs, fn(g)):
                if gi is None or not inp.requires_grad:
                    continue
                if isinstance(inp, Parameter):
                    inp.grad = inp.grad + gi
                    continue
                key = id(inp)
                prev = adjoints.get(key)
                adjoints[key] = gi if prev is None else prev + gi


def active_tape() -> Tape | None:
    return _get("tape", None)


@contextlib.contextmanager
def no_tape() -> Iterator[None]:
    """Suspend recording, e.g. for frozen sub-networks."""
    prev = _get("tape", None)
    _state.tape = None
    try:
        yield
    finally:
        _state.tape = prev


def make(data: np.ndarray, inputs: tuple[Tensor, ...], backward: BackwardFn) -> Tensor:
    """Wrap an op result and record it on the active tape when needed."""
    if checked_mode() and not np.all(np.isfinite(data)):
        raise FloatingPointError("non-finite value produced by a kernel op")
    needs = any(t.requires_grad for t in inputs)
    out = Tensor.__new__(Tensor)
    out.data = data
    tape = active_tape()
    out.requires_grad = needs and tape is not None
    if out.requires_grad:
        tape.record(out, inputs, backward)
    return out


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)
