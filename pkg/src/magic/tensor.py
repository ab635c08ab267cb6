"""Dense 2-D float64 tensors with reverse-mode automatic differentiation.

Every trainable quantity in the pipeline is a `Tensor`; operations executed
while a `GradientTape` is active are recorded so `backward()` can replay them
in reverse and accumulate gradients into parameter tensors.

Tapes are tracked per thread, so independent tapes may run concurrently on
disjoint data.  Within one tape everything is single-threaded and the node
order is the execution order, which is already topological.
"""

from __future__ import annotations

import threading

import numpy as np


class TensorError(Exception):
    """Base class for tensor failures."""


class ShapeError(TensorError):
    """Operand shapes are incompatible with the requested operation."""


class NumericError(TensorError):
    """An operation produced or received a non-finite or invalid value."""


_TLS = threading.local()


def _tape_stack() -> list["GradientTape"]:
    stack = getattr(_TLS, "stack", None)
    if stack is None:
        stack = []
        _TLS.stack = stack
    return stack


def active_tape() -> "GradientTape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """A rows x cols float64 array, optionally participating in a tape."""

    __slots__ = ("data", "grad", "requires_grad", "node")

    def __init__(self, data, parameter: bool = False):
        arr = np.array(data, dtype=np.float64, copy=True)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got {arr.ndim}-D data")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = parameter
        self.node: "_Node | None" = None

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def __repr__(self) -> str:
        flag = ", parameter" if self.requires_grad and self.node is None else ""
        return f"Tensor({self.rows}x{self.cols}{flag})"


def parameter(data) -> Tensor:
    """A leaf tensor that accumulates gradients during backward()."""
    return Tensor(data, parameter=True)


def constant(data) -> Tensor:
    """A leaf tensor excluded from gradient computation."""
    return Tensor(data)


class _Node:
    """One recorded operation: inputs, the output, and its backward rule."""

    __slots__ = ("inputs", "out", "backward_fn", "tape")

    def __init__(self, inputs, out, backward_fn, tape):
        self.inputs = inputs
        self.out = out
        self.backward_fn = backward_fn
        self.tape = tape


class GradientTape:
    """Records operations for one reverse pass.

    Use as a context manager around the forward computation; `backward(loss)`
    may then run inside or after the `with` block.  The tape is cleared once
    backward completes.
    """

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self) -> "GradientTape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        stack = _tape_stack()
        if not stack or stack[-1] is not self:
            raise TensorError("gradient tapes must be exited in LIFO order")
        stack.pop()


def _check_finite(arr: np.ndarray, op: str) -> None:
    if not np.isfinite(arr).all():
        raise NumericError(f"non-finite values produced by '{op}'")


def _wrap(arr: np.ndarray) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = arr
    out.grad = None
    out.requires_grad = False
    out.node = None
    return out


def _emit(out_data: np.ndarray, inputs: tuple[Tensor, ...], backward_fn, op: str) -> Tensor:
    _check_finite(out_data, op)
    out = _wrap(out_data)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.node = _Node(inputs, out, backward_fn, tape)
        tape.nodes.append(out.node)
    return out


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(input) into the grad of every tape input.

    The loss must be a 1x1 tensor produced under a tape.  Nodes are visited
    exactly once, in reverse execution order; the tape is cleared afterwards.
    """
    if loss.shape != (1, 1):
        raise ShapeError(f"backward() needs a scalar loss, got {loss.shape}")
    if loss.node is None:
        raise TensorError("loss was not produced under an active gradient tape")
    tape = loss.node.tape
    loss.grad = np.ones((1, 1), dtype=np.float64)
    for node in reversed(tape.nodes):
        g = node.out.grad
        if g is None:
            continue
        grads = node.backward_fn(g)
        for inp, gi in zip(node.inputs, grads):
            if gi is None or not inp.requires_grad:
                continue
            # accumulation always builds a new array, so shared references
            # and views returned by backward rules are never mutated
            inp.grad = gi if inp.grad is None else inp.grad + gi
    tape.nodes.clear()


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.rows:
        raise ShapeError(f"matmul: {a.shape} x {b.shape}")
    out = a.data @ b.data

    def back(g):
        return g @ b.data.T, a.data.T @ g

    return _emit(out, (a, b), back, "matmul")


def _binary_check(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _binary_check(a, b, "add")
    return _emit(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _binary_check(a, b, "sub")
    return _emit(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _binary_check(a, b, "mul")

    def back(g):
        return g * b.data, g * a.data

    return _emit(a.data * b.data, (a, b), back, "mul")


def div(a: Tensor, b: Tensor) -> Tensor:
    _binary_check(a, b, "div")
    if np.any(b.data == 0.0):
        raise NumericError("div: zero divisor entry")

    def back(g):
        return g / b.data, -g * a.data / (b.data * b.data)

    return _emit(a.data / b.data, (a, b), back, "div")


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    if not np.isfinite(s):
        raise NumericError("scale: non-finite factor")
    return _emit(a.data * s, (a,), lambda g: (g * s,), "scale")


def leaky_relu(a: Tensor, slope: float) -> Tensor:
    slope = float(slope)
    if not (np.isfinite(slope) and slope > 0):
        raise NumericError("leaky_relu: slope must be finite and positive")
    pos = a.data >= 0.0

    def back(g):
        return (np.where(pos, g, g * slope),)

    return _emit(np.where(pos, a.data, a.data * slope), (a,), back, "leaky_relu")


def elu(a: Tensor, alpha: float = 1.0) -> Tensor:
    alpha = float(alpha)
    if not (np.isfinite(alpha) and alpha > 0):
        raise NumericError("elu: alpha must be finite and positive")
    neg = alpha * np.expm1(np.minimum(a.data, 0.0))
    pos = a.data > 0.0

    def back(g):
        # d/dx alpha*(e^x - 1) = alpha*e^x = neg branch + alpha
        return (np.where(pos, g, g * (neg + alpha)),)

    return _emit(np.where(pos, a.data, neg), (a,), back, "elu")


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = np.exp(a.data)

    def back(g):
        return (g * out,)

    return _emit(out, (a,), back, "exp")


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0.0):
        raise NumericError("log: non-positive entry")

    def back(g):
        return (g / a.data,)

    return _emit(np.log(a.data), (a,), back, "log")


def clamp_min(a: Tensor, floor: float) -> Tensor:
    """max(a, floor) entry-wise; gradient passes where a > floor."""
    floor = float(floor)
    above = a.data > floor

    def back(g):
        return (np.where(above, g, 0.0),)

    return _emit(np.maximum(a.data, floor), (a,), back, "clamp_min")


def sum_all(a: Tensor) -> Tensor:
    def back(g):
        return (np.full_like(a.data, g[0, 0]),)

    return _emit(np.array([[a.data.sum()]]), (a,), back, "sum_all")


def add_rowvec(a: Tensor, b: Tensor) -> Tensor:
    """Add a 1 x cols row vector to every row of a."""
    if b.rows != 1 or b.cols != a.cols:
        raise ShapeError(f"add_rowvec: {a.shape} + {b.shape}")

    def back(g):
        return g, g.sum(axis=0, keepdims=True)

    return _emit(a.data + b.data, (a, b), back, "add_rowvec")


def mul_rows(a: Tensor, c: Tensor) -> Tensor:
    """Scale row i of a by c[i, 0]."""
    if c.cols != 1 or c.rows != a.rows:
        raise ShapeError(f"mul_rows: {a.shape} * {c.shape}")

    def back(g):
        return g * c.data, (g * a.data).sum(axis=1, keepdims=True)

    return _emit(a.data * c.data, (a, c), back, "mul_rows")


def concat_cols(tensors: list[Tensor]) -> Tensor:
    if not tensors:
        raise ShapeError("concat_cols: empty input list")
    rows = tensors[0].rows
    for t in tensors[1:]:
        if t.rows != rows:
            raise ShapeError("concat_cols: row count mismatch")
    widths = [t.cols for t in tensors]
    edges = np.cumsum([0] + widths)

    def back(g):
        return tuple(g[:, edges[i]:edges[i + 1]] for i in range(len(widths)))

    return _emit(np.concatenate([t.data for t in tensors], axis=1), tuple(tensors), back, "concat_cols")


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    if not (0 <= start < stop <= a.rows):
        raise ShapeError(f"slice_rows: [{start}:{stop}] out of {a.rows} rows")

    def back(g):
        full = np.zeros_like(a.data)
        full[start:stop] = g
        return (full,)

    return _emit(a.data[start:stop].copy(), (a,), back, "slice_rows")


def gather_rows(a: Tensor, index: np.ndarray) -> Tensor:
    index = np.asarray(index, dtype=np.int64)
    if index.size and (index.min() < 0 or index.max() >= a.rows):
        raise ShapeError("gather_rows: index out of range")

    def back(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)

    return _emit(a.data[index], (a,), back, "gather_rows")


def segment_sum(a: Tensor, row_ptr: np.ndarray) -> Tensor:
    """Sum contiguous row segments delimited by row_ptr (len = segments + 1).

    Segments must be non-empty and cover all rows of `a` exactly.
    """
    row_ptr = np.asarray(row_ptr, dtype=np.int64)
    if row_ptr[0] != 0 or row_ptr[-1] != a.rows or np.any(np.diff(row_ptr) <= 0):
        raise ShapeError("segment_sum: row_ptr must cover all rows with non-empty segments")
    counts = np.diff(row_ptr)

    def back(g):
        return (np.repeat(g, counts, axis=0),)

    return _emit(np.add.reduceat(a.data, row_ptr[:-1], axis=0), (a,), back, "segment_sum")


def softmax_masked(logits: Tensor, mask: np.ndarray) -> Tensor:
    """Row-wise softmax over unmasked entries; masked entries are exactly 0.

    Numerically stabilised by subtracting each row's unmasked max, which
    leaves the result mathematically unchanged.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != logits.shape:
        raise ShapeError(f"softmax_masked: mask {mask.shape} vs logits {logits.shape}")
    if not mask.any(axis=1).all():
        raise NumericError("softmax_masked: a row has no unmasked entries")
    shifted = np.where(mask, logits.data, -np.inf)
    shifted = shifted - shifted.max(axis=1, keepdims=True)
    expv = np.where(mask, np.exp(shifted), 0.0)
    out = expv / expv.sum(axis=1, keepdims=True)

    def back(g):
        inner = (g * out).sum(axis=1, keepdims=True)
        return (out * (g - inner),)

    return _emit(out, (logits,), back, "softmax_masked")
