"""Dense tensors with reverse-mode automatic differentiation.

Arrays are numpy-backed, row-major, NCHW for 4-D activations. Every op that
runs while recording is enabled appends an entry to a global tape; backward()
replays the tape in exact reverse execution order, so gradient accumulation
order is fixed and runs are bit-reproducible single-threaded.

Training and inference use float32; gradient-check tests build float64
tensors and every op preserves the input dtype.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

# Guard used inside log and division so saturated sigmoids cannot produce
# non-finite loss values.
EPS = 1e-12


class NumericError(ValueError):
    """A forward op produced NaN/Inf, or a numeric precondition failed."""


def _as_array(data, dtype=None) -> np.ndarray:
    if dtype is None and isinstance(data, (np.ndarray, np.generic)):
        arr = np.asarray(data)
        if arr.dtype in (np.float32, np.float64):
            return arr
        return arr.astype(np.float32)
    return np.asarray(data, dtype=dtype or np.float32)


class Tensor:
    """N-dimensional dense array, optionally tracked for gradients."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = _as_array(data, dtype)
        self.grad: np.ndarray | None = None
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
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # -- arithmetic sugar -------------------------------------------------

    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __rtruediv__(self, other):
        return div(_wrap(other), self)

    def __neg__(self):
        return neg(self)

    def sum(self, axes=None, keepdims: bool = False):
        return reduce_sum(self, axes, keepdims)

    def mean(self, axes=None, keepdims: bool = False):
        return reduce_mean(self, axes, keepdims)

    def max(self, axes=None, keepdims: bool = False):
        return reduce_max(self, axes, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def backward(self) -> None:
        backward(self)


def _wrap(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


# -- tape --------------------------------------------------------------------


class _Entry:
    __slots__ = ("out", "inputs", "vjp")

    def __init__(self, out: Tensor, inputs: tuple[Tensor, ...], vjp: Callable):
        self.out = out
        self.inputs = inputs
        self.vjp = vjp


_TAPE: list[_Entry] = []
_RECORDING: bool = True
_FINITE_CHECKS: bool = True


def tape_size() -> int:
    return len(_TAPE)


def clear_tape() -> None:
    _TAPE.clear()


@contextlib.contextmanager
def no_grad():
    """Disable tape recording (inference paths)."""
    global _RECORDING
    prev = _RECORDING
    _RECORDING = False
    try:
        yield
    finally:
        _RECORDING = prev


@contextlib.contextmanager
def finite_checks(enabled: bool):
    global _FINITE_CHECKS
    prev = _FINITE_CHECKS
    _FINITE_CHECKS = enabled
    try:
        yield
    finally:
        _FINITE_CHECKS = prev


def _check_finite(out: np.ndarray, op_name: str) -> None:
    if _FINITE_CHECKS and not np.isfinite(out).all():
        raise NumericError(f"non-finite values produced by op '{op_name}'")


def make_op(op_name: str, inputs: Sequence[Tensor], out_data: np.ndarray,
            vjp: Callable) -> Tensor:
    """Wrap an op result, registering a tape entry when gradients are needed.

    vjp(g) must return one gradient array (or None) per input, in order.
    """
    _check_finite(out_data, op_name)
    requires = _RECORDING and any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=requires)
    if requires:
        _TAPE.append(_Entry(out, tuple(inputs), vjp))
    return out


def backward(loss: Tensor) -> None:
    """Populate .grad for every tensor that contributed to a scalar loss.

    The tape is traversed in exact reverse execution order and released
    afterwards. A parameter used several times receives the sum of all its
    contributions. Tensors recorded on the tape but not reachable from the
    loss end with a zero gradient.
    """
    if loss.size != 1:
        raise ValueError(f"backward requires a scalar loss, got shape {loss.shape}")
    if not _TAPE:
        raise RuntimeError("backward called with an empty tape")
    loss.grad = np.ones_like(loss.data)
    recorded: list[Tensor] = []
    interior = {id(entry.out) for entry in _TAPE}
    for entry in reversed(_TAPE):
        recorded.extend(t for t in entry.inputs
                        if t.requires_grad and id(t) not in interior)
        g = entry.out.grad
        if g is None:
            continue
        grads = entry.vjp(g)
        for t, gi in zip(entry.inputs, grads):
            if gi is None or not t.requires_grad:
                continue
            if t.grad is None:
                t.grad = gi if gi.shape == t.data.shape else np.broadcast_to(gi, t.data.shape).copy()
            else:
                t.grad = t.grad + gi
        if entry.out is not loss:
            entry.out.grad = None
    for t in recorded:
        if t.grad is None:
            t.grad = np.zeros_like(t.data)
    clear_tape()


# -- broadcasting helpers ------------------------------------------------------


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum gradient over dimensions that were broadcast in the forward op."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# -- elementwise binary ops ----------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make_op("add", (a, b), out, vjp)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.data - b.data

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return make_op("sub", (a, b), out, vjp)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data

    def vjp(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return make_op("mul", (a, b), out, vjp)


def _guard_denominator(b: np.ndarray) -> np.ndarray:
    # shift magnitude away from zero; sign-preserving, sign(0) treated as +
    return np.where(b >= 0, b + EPS, b - EPS)


def div(a: Tensor, b: Tensor) -> Tensor:
    denom = _guard_denominator(b.data)
    out = a.data / denom

    def vjp(g):
        ga = g / denom
        gb = -g * a.data / (denom * denom)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return make_op("div", (a, b), out, vjp)


# -- elementwise unary ops -----------------------------------------------------


def neg(a: Tensor) -> Tensor:
    return make_op("neg", (a,), -a.data, lambda g: (-g,))


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return make_op("exp", (a,), out, lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    shifted = a.data + EPS
    out = np.log(shifted)
    return make_op("log", (a,), out, lambda g: (g / shifted,))


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)

    def vjp(g):
        return (g * (0.5 / np.maximum(out, EPS)),)

    return make_op("sqrt", (a,), out, vjp)


def sigmoid(a: Tensor) -> Tensor:
    # stable in both tails
    out = np.where(a.data >= 0,
                   1.0 / (1.0 + np.exp(-np.abs(a.data))),
                   np.exp(-np.abs(a.data)) / (1.0 + np.exp(-np.abs(a.data))))
    out = out.astype(a.data.dtype, copy=False)
    return make_op("sigmoid", (a,), out, lambda g: (g * out * (1.0 - out),))


def relu6(a: Tensor) -> Tensor:
    out = np.clip(a.data, 0.0, 6.0)

    def vjp(g):
        return (g * ((a.data > 0.0) & (a.data < 6.0)),)

    return make_op("relu6", (a,), out, vjp)


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    out = np.clip(a.data, lo, hi)

    def vjp(g):
        return (g * ((a.data > lo) & (a.data < hi)),)

    return make_op("clamp", (a,), out, vjp)


# -- reductions ----------------------------------------------------------------


def _norm_axes(axes, ndim: int) -> tuple[int, ...]:
    if axes is None:
        return tuple(range(ndim))
    if isinstance(axes, int):
        axes = (axes,)
    out = tuple(ax % ndim if -ndim <= ax < ndim else _bad_axis(ax, ndim) for ax in axes)
    return out


def _bad_axis(ax, ndim):
    raise ValueError(f"axis {ax} out of range for ndim {ndim}")


def _expand_for_reduce(g: np.ndarray, shape: tuple[int, ...], axes: tuple[int, ...],
                       keepdims: bool) -> np.ndarray:
    if not keepdims:
        for ax in sorted(axes):
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape)


def reduce_sum(a: Tensor, axes=None, keepdims: bool = False) -> Tensor:
    axes_t = _norm_axes(axes, a.ndim)
    out = a.data.sum(axis=axes_t, keepdims=keepdims)

    def vjp(g):
        return (_expand_for_reduce(g, a.shape, axes_t, keepdims).copy(),)

    return make_op("sum", (a,), np.asarray(out), vjp)


def reduce_mean(a: Tensor, axes=None, keepdims: bool = False) -> Tensor:
    axes_t = _norm_axes(axes, a.ndim)
    count = max(int(np.prod([a.shape[ax] for ax in axes_t])), 1) if axes_t else 1
    with np.errstate(invalid="raise", divide="raise"):
        try:
            out = a.data.mean(axis=axes_t, keepdims=keepdims)
        except FloatingPointError as err:
            raise NumericError(f"mean over empty extent: {err}") from None

    def vjp(g):
        return (_expand_for_reduce(g, a.shape, axes_t, keepdims) / count,)

    return make_op("mean", (a,), np.asarray(out), vjp)


def reduce_max(a: Tensor, axes=None, keepdims: bool = False) -> Tensor:
    axes_t = _norm_axes(axes, a.ndim)
    out = a.data.max(axis=axes_t, keepdims=keepdims)

    def vjp(g):
        # ties split evenly so the result is deterministic
        full = _expand_for_reduce(np.asarray(out), a.shape, axes_t, keepdims)
        mask = (a.data == full)
        counts = mask.sum(axis=axes_t, keepdims=True)
        ge = _expand_for_reduce(g, a.shape, axes_t, keepdims)
        return (ge * mask / counts,)

    return make_op("max", (a,), np.asarray(out), vjp)


# -- shape ops -----------------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    out = a.data.reshape(shape)

    def vjp(g):
        return (g.reshape(a.shape),)

    return make_op("reshape", (a,), out, vjp)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    out = np.concatenate([t.data for t in tensors], axis=axis)
    extents = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + extents)

    def vjp(g):
        slicer: list = [slice(None)] * g.ndim
        grads = []
        for k in range(len(tensors)):
            slicer[axis] = slice(int(offsets[k]), int(offsets[k + 1]))
            grads.append(g[tuple(slicer)])
        return tuple(grads)

    return make_op("concat", tensors, out, vjp)


def elementwise(op_kind: str, a: Tensor, b: Tensor | None = None, **kwargs) -> Tensor:
    """Dispatch by op name; binary ops broadcast under trailing-dim rules."""
    unary = {"exp": exp, "log": log, "sigmoid": sigmoid, "relu6": relu6,
             "neg": neg, "sqrt": sqrt}
    binary = {"add": add, "sub": sub, "mul": mul, "div": div}
    if op_kind == "clamp":
        return clamp(a, kwargs["lo"], kwargs["hi"])
    if op_kind in unary:
        if b is not None:
            raise ValueError(f"{op_kind} takes one operand")
        return unary[op_kind](a)
    if op_kind in binary:
        if b is None:
            raise ValueError(f"{op_kind} takes two operands")
        return binary[op_kind](a, b)
    raise ValueError(f"unknown elementwise op '{op_kind}'")


def reduce(op_kind: str, a: Tensor, axes=None, keepdims: bool = False) -> Tensor:
    table = {"sum": reduce_sum, "mean": reduce_mean, "max": reduce_max}
    if op_kind not in table:
        raise ValueError(f"unknown reduce op '{op_kind}'")
    return table[op_kind](a, axes, keepdims)


def parameter(data, rng: np.random.Generator | None = None, scale: float | None = None,
              shape=None) -> Tensor:
    """Build a trainable leaf tensor; with rng+scale+shape draws N(0, scale^2)."""
    if data is None:
        data = (rng.standard_normal(shape) * scale).astype(np.float32)
    return Tensor(data, requires_grad=True)
