"""Dense float64 tensors with reverse-mode automatic differentiation.

Operations record themselves on an explicit gradient tape while one is
active; replaying the tape in exact reverse order accumulates adjoints.
Composing losses from these primitives means no layer or loss needs a
hand-derived backward pass, and every analytic gradient can be checked
against the central finite-difference oracle in this module.

All values are 64-bit floats. Every public operation verifies that its
result is finite, so NaN or overflow surfaces at the op that produced it
rather than epochs later.
"""
from __future__ import annotations

import itertools
from typing import Callable, Sequence

import numpy as np

from .errors import (
    ContractError,
    DegenerateEmbeddingError,
    DimensionError,
    NonFiniteError,
)

# Row norms at or below this are treated as zero vectors.
NORM_EPSILON = 1e-12

_tensor_ids = itertools.count()
_active_tape: "GradTape | None" = None


class Tensor:
    """Immutable dense float64 array participating in autodiff.

    Wraps a read-only numpy array. Tensors are written once by the
    operation that produced them; updates (such as SGD steps) build new
    tensors instead of mutating.
    """

    __slots__ = ("data", "tid", "tape")

    def __init__(self, values, shape: Sequence[int] | None = None):
        arr = np.array(values, dtype=np.float64)
        if shape is not None:
            arr = arr.reshape(tuple(shape))
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError("tensor constructed with non-finite entries")
        arr.flags.writeable = False
        self.data = arr
        self.tid = next(_tensor_ids)
        self.tape: GradTape | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"

    # Arithmetic sugar; delegates to the module-level ops.
    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return subtract(self, other)

    def __rsub__(self, other):
        return subtract(other, self)

    def __mul__(self, other):
        return multiply(self, other)

    def __rmul__(self, other):
        return multiply(other, self)

    def __neg__(self):
        return multiply(self, -1.0)


def as_tensor(values) -> Tensor:
    """Wrap array-like input as a Tensor; Tensors pass through unchanged."""
    if isinstance(values, Tensor):
        return values
    return Tensor(values)


class GradTape:
    """Records primitive operations for later reverse-mode replay.

    Use as a context manager. Only one tape may be active at a time;
    the training loop is single-threaded per step by design.
    """

    def __init__(self):
        self._entries: list[tuple[int, tuple[int, ...], Callable]] = []

    def __enter__(self) -> "GradTape":
        global _active_tape
        if _active_tape is not None:
            raise ContractError("a gradient tape is already active")
        _active_tape = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _active_tape
        _active_tape = None
        return False

    def __len__(self) -> int:
        return len(self._entries)

    def operation_ids(self) -> list[int]:
        """Output tensor ids in recording order (diagnostic)."""
        return [out_tid for out_tid, _, _ in self._entries]

    def gradient(self, output: Tensor, inputs: Sequence[Tensor]) -> list[Tensor]:
        """Gradients of a scalar output with respect to each input.

        Inputs that did not participate in producing the output get an
        exact zero gradient of their own shape.
        """
        if output.shape != ():
            raise ContractError(f"gradient of non-scalar output with shape {output.shape}")
        adjoints: dict[int, np.ndarray] = {output.tid: np.ones(())}
        for out_tid, in_tids, backward in reversed(self._entries):
            g_out = adjoints.pop(out_tid, None)
            if g_out is None:
                continue
            for tid, g_in in zip(in_tids, backward(g_out)):
                if tid in adjoints:
                    adjoints[tid] = adjoints[tid] + g_in
                else:
                    adjoints[tid] = g_in
        out = []
        for inp in inputs:
            g = adjoints.get(inp.tid)
            if g is None:
                g = np.zeros(inp.shape)
            out.append(Tensor(np.broadcast_to(g, inp.shape)))
        return out


def grad(output: Tensor, inputs: Sequence[Tensor]) -> list[Tensor]:
    """Gradients of a scalar output produced under an active tape.

    A tensor that never went through a taped operation is a constant;
    its gradient with respect to anything is zero.
    """
    if output.shape != ():
        raise ContractError(f"gradient of non-scalar output with shape {output.shape}")
    if output.tape is None:
        return [Tensor(np.zeros(inp.shape)) for inp in inputs]
    return output.tape.gradient(output, inputs)


def _check_finite(arr: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{op} produced non-finite values")


def _record(out: Tensor, inputs: Sequence[Tensor], backward: Callable) -> None:
    if _active_tape is not None:
        _active_tape._entries.append(
            (out.tid, tuple(t.tid for t in inputs), backward)
        )
        out.tape = _active_tape


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, width in enumerate(shape):
        if width == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def matmul(a, b) -> Tensor:
    """Matrix product of two rank-2 tensors."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out_data = a.data @ b.data
    _check_finite(out_data, "matmul")
    out = Tensor(out_data)
    a_data, b_data = a.data, b.data
    _record(out, (a, b), lambda g: (g @ b_data.T, a_data.T @ g))
    return out


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise DimensionError(f"transpose: rank-2 tensor required, got shape {a.shape}")
    out = Tensor(a.data.T)
    _record(out, (a,), lambda g: (g.T,))
    return out


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out_data = a.data + b.data
    except ValueError as exc:
        raise DimensionError(f"add: incompatible shapes {a.shape} and {b.shape}") from exc
    _check_finite(out_data, "add")
    out = Tensor(out_data)
    a_shape, b_shape = a.shape, b.shape
    _record(out, (a, b), lambda g: (_unbroadcast(g, a_shape), _unbroadcast(g, b_shape)))
    return out


def subtract(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out_data = a.data - b.data
    except ValueError as exc:
        raise DimensionError(f"subtract: incompatible shapes {a.shape} and {b.shape}") from exc
    _check_finite(out_data, "subtract")
    out = Tensor(out_data)
    a_shape, b_shape = a.shape, b.shape
    _record(out, (a, b), lambda g: (_unbroadcast(g, a_shape), _unbroadcast(-g, b_shape)))
    return out


def multiply(a, b) -> Tensor:
    """Elementwise product with numpy broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    try:
        out_data = a.data * b.data
    except ValueError as exc:
        raise DimensionError(f"multiply: incompatible shapes {a.shape} and {b.shape}") from exc
    _check_finite(out_data, "multiply")
    out = Tensor(out_data)
    a_data, b_data, a_shape, b_shape = a.data, b.data, a.shape, b.shape
    _record(
        out,
        (a, b),
        lambda g: (_unbroadcast(g * b_data, a_shape), _unbroadcast(g * a_data, b_shape)),
    )
    return out


def relu(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.maximum(a.data, 0.0))
    mask = a.data > 0.0
    _record(out, (a,), lambda g: (g * mask,))
    return out


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.tanh(a.data)
    out = Tensor(out_data)
    _record(out, (a,), lambda g: (g * (1.0 - out_data * out_data),))
    return out


def exp(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.exp(a.data)
    _check_finite(out_data, "exp")
    out = Tensor(out_data)
    _record(out, (a,), lambda g: (g * out_data,))
    return out


def log(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out_data = np.log(a.data)
    _check_finite(out_data, "log")
    out = Tensor(out_data)
    a_data = a.data
    _record(out, (a,), lambda g: (g / a_data,))
    return out


def reduce_sum(a, axis: int | None = None) -> Tensor:
    """Sum over one axis, or over all entries when axis is None."""
    a = as_tensor(a)
    if axis is None:
        out = Tensor(a.data.sum())
        a_shape = a.shape
        _record(out, (a,), lambda g: (np.broadcast_to(g, a_shape).copy(),))
        return out
    if not -a.ndim <= axis < a.ndim:
        raise DimensionError(f"reduce_sum: axis {axis} out of range for shape {a.shape}")
    out = Tensor(a.data.sum(axis=axis))
    a_shape, ax = a.shape, axis % a.ndim

    def backward(g):
        return (np.broadcast_to(np.expand_dims(g, ax), a_shape).copy(),)

    _record(out, (a,), backward)
    return out


def mean(a) -> Tensor:
    """Arithmetic mean over all entries."""
    a = as_tensor(a)
    return multiply(reduce_sum(a), 1.0 / a.size)


def l2_normalize(a) -> Tensor:
    """Scale a vector, or each row of a matrix, to unit Euclidean norm."""
    a = as_tensor(a)
    if a.ndim == 1:
        norms = np.linalg.norm(a.data, keepdims=True)
    elif a.ndim == 2:
        norms = np.linalg.norm(a.data, axis=1, keepdims=True)
    else:
        raise DimensionError(f"l2_normalize: rank-1 or rank-2 tensor required, got {a.shape}")
    if not np.all(np.isfinite(norms)):
        # Without this check an overflowed norm silently maps the row to zeros.
        raise NonFiniteError("l2_normalize: norm overflowed")
    if np.any(norms <= NORM_EPSILON):
        raise DegenerateEmbeddingError("l2_normalize: row with (near-)zero norm")
    out_data = a.data / norms
    out = Tensor(out_data)

    def backward(g):
        # For z = v / |v|: dv = (g - z (z.g)) / |v|, applied per row.
        if out_data.ndim == 1:
            inner = np.dot(out_data, g)
        else:
            inner = np.sum(out_data * g, axis=1, keepdims=True)
        return ((g - out_data * inner) / norms,)

    _record(out, (a,), backward)
    return out


def finite_difference_gradient(
    f: Callable[[np.ndarray], float], x: np.ndarray, step: float = 1e-5
) -> np.ndarray:
    """Central finite-difference gradient of a scalar function.

    The independent oracle for gradient checks: evaluates f twice per
    coordinate and never touches the tape.
    """
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    flat = out.reshape(-1)
    for i in range(x.size):
        xp = x.copy().reshape(-1)
        xm = x.copy().reshape(-1)
        xp[i] += step
        xm[i] -= step
        fp = f(xp.reshape(x.shape))
        fm = f(xm.reshape(x.shape))
        flat[i] = (fp - fm) / (2.0 * step)
    return out


def gradient_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max elementwise relative error, denominator floored at 1e-8."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))
