"""Reverse-mode automatic differentiation over dense numpy tensors.

A :class:`Tape` records every operation of one forward pass in execution
order; :meth:`Tape.backward` replays the records in reverse, which is a
reverse topological order by construction, visiting each node exactly
once. Tapes are cheap and are discarded after the backward pass.

Broadcasting is deliberately restricted: binary elementwise ops accept
equal shapes or a scalar on either side, nothing else. Row-vector bias
addition has its own op (:func:`add_bias`) so the restriction stays
airtight. Gradients of every op are exercised against central finite
differences in the test suite.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import NumericError, ShapeError
from .rng import RngStream

__all__ = [
    "Tape",
    "Tensor",
    "add",
    "sub",
    "mul",
    "neg",
    "exp",
    "log",
    "sigmoid",
    "tanh",
    "matmul",
    "add_bias",
    "log_softmax",
    "embedding_lookup",
    "dropout",
    "concat",
    "reshape",
    "sum_all",
    "mean_all",
    "sum_rows",
    "take_per_row",
]

Scalar = Union[int, float]


class Tensor:
    """A dense array plus an optional gradient slot.

    Created through a :class:`Tape` (leaves) or by applying ops to
    existing tensors. ``grad`` is populated by ``Tape.backward`` and has
    the same shape as ``data``.
    """

    __slots__ = ("data", "grad", "node_id", "tape", "requires_grad")

    def __init__(self, data: np.ndarray, tape: "Tape", node_id: int, requires_grad: bool):
        self.data = data
        self.grad: Optional[np.ndarray] = None
        self.tape = tape
        self.node_id = node_id
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # Operator sugar for the elementwise ops.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, id={self.node_id})"


class Tape:
    """Execution trace of one forward pass.

    ``debug_nan=True`` checks every op output and raises
    :class:`NumericError` naming the op that first produced a NaN.
    """

    def __init__(self, debug_nan: bool = False):
        self._records: list[tuple[str, Tensor, Callable[[np.ndarray], None]]] = []
        self._next_id = 0
        self.debug_nan = debug_nan

    def _new_tensor(self, data: np.ndarray, requires_grad: bool) -> Tensor:
        t = Tensor(data, self, self._next_id, requires_grad)
        self._next_id += 1
        return t

    def leaf(self, data, requires_grad: bool = True, dtype=None) -> Tensor:
        arr = np.asarray(data, dtype=dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        return self._new_tensor(arr, requires_grad)

    def constant(self, data, dtype=None) -> Tensor:
        return self.leaf(data, requires_grad=False, dtype=dtype)

    def record(self, name: str, out_data: np.ndarray, parents: Sequence[Tensor],
               backward_fn: Callable[[np.ndarray], None]) -> Tensor:
        if self.debug_nan and np.isnan(out_data).any():
            raise NumericError(f"op '{name}' produced NaN")
        requires_grad = any(p.requires_grad for p in parents)
        out = self._new_tensor(out_data, requires_grad)
        if requires_grad:
            self._records.append((name, out, backward_fn))
        return out

    def backward(self, loss: Tensor) -> None:
        """Accumulate gradients of a scalar ``loss`` into every leaf.

        The tape is freed afterwards; gradients stay on the tensors.
        """
        if loss.tape is not self:
            raise ValueError("loss was not recorded on this tape")
        if loss.size != 1:
            raise ShapeError(f"backward requires a scalar loss, got shape {loss.shape}")
        loss.grad = np.ones_like(loss.data)
        for _name, out, backward_fn in reversed(self._records):
            if out.grad is not None:
                backward_fn(out.grad)
        self._records.clear()

    def __len__(self) -> int:
        return len(self._records)


def _same_tape(*tensors: Tensor) -> Tape:
    tape = tensors[0].tape
    for t in tensors[1:]:
        if t.tape is not tape:
            raise ValueError("operands belong to different tapes")
    return tape


def _as_operands(a: Tensor, b) -> tuple[Tape, Tensor, Tensor]:
    tape = a.tape
    if not isinstance(b, Tensor):
        b = tape.constant(np.asarray(b, dtype=a.data.dtype))
    else:
        _same_tape(a, b)
    if a.shape != b.shape and a.size != 1 and b.size != 1:
        raise ShapeError(
            f"shapes {a.shape} and {b.shape} are not equal and neither is scalar"
        )
    return tape, a, b


def _reduce_to(g: np.ndarray, shape: tuple) -> np.ndarray:
    # Undo scalar broadcasting: sum the upstream gradient back to `shape`.
    if g.shape == shape:
        return g
    return np.sum(g).reshape(shape) if shape != () else np.asarray(np.sum(g))


def add(a: Tensor, b) -> Tensor:
    tape, a, b = _as_operands(a, b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_reduce_to(g, a.shape))
        if b.requires_grad:
            b._accumulate(_reduce_to(g, b.shape))

    return tape.record("add", a.data + b.data, (a, b), backward)


def sub(a: Tensor, b) -> Tensor:
    tape, a, b = _as_operands(a, b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_reduce_to(g, a.shape))
        if b.requires_grad:
            b._accumulate(_reduce_to(-g, b.shape))

    return tape.record("sub", a.data - b.data, (a, b), backward)


def mul(a: Tensor, b) -> Tensor:
    tape, a, b = _as_operands(a, b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_reduce_to(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_reduce_to(g * a.data, b.shape))

    return tape.record("mul", a.data * b.data, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    def backward(g):
        if a.requires_grad:
            a._accumulate(-g)

    return a.tape.record("neg", -a.data, (a,), backward)


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * out_data)

    return a.tape.record("exp", out_data, (a,), backward)


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise NumericError("log of non-positive input")
    out_data = np.log(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g / a.data)

    return a.tape.record("log", out_data, (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    # Stable in both tails: exp is only taken of non-positive values.
    x = a.data
    out_data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                        np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * out_data * (1.0 - out_data))

    return a.tape.record("sigmoid", out_data, (a,), backward)


def tanh(a: Tensor) -> Tensor:
    out_data = np.tanh(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * (1.0 - out_data * out_data))

    return a.tape.record("tanh", out_data, (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _same_tape(a, b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shapes {a.shape} and {b.shape} do not agree")

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    return a.tape.record("matmul", a.data @ b.data, (a, b), backward)


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Add a length-n bias vector to every row of an m-by-n matrix."""
    _same_tape(x, bias)
    if x.data.ndim != 2 or bias.data.ndim != 1 or x.shape[1] != bias.shape[0]:
        raise ShapeError(f"add_bias shapes {x.shape} and {bias.shape} do not agree")

    def backward(g):
        if x.requires_grad:
            x._accumulate(g)
        if bias.requires_grad:
            bias._accumulate(g.sum(axis=0))

    return x.tape.record("add_bias", x.data + bias.data, (x, bias), backward)


def log_softmax(logits: Tensor) -> Tensor:
    """Row-wise log-softmax (last axis), max-subtracted for stability."""
    x = logits.data
    if x.ndim not in (1, 2) or x.shape[-1] < 1:
        raise ShapeError(f"log_softmax expects a 1-D or 2-D tensor, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise NumericError("log_softmax input contains NaN or Inf")
    m = x.max(axis=-1, keepdims=True)
    shifted = x - m
    out_data = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))

    def backward(g):
        if logits.requires_grad:
            softmax = np.exp(out_data)
            logits._accumulate(g - softmax * g.sum(axis=-1, keepdims=True))

    return logits.tape.record("log_softmax", out_data, (logits,), backward)


def embedding_lookup(table: Tensor, ids: Sequence[int]) -> Tensor:
    """Gather rows of ``table``; backward scatter-adds into the rows."""
    idx = np.asarray(ids, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeError(f"embedding ids must be 1-D, got shape {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise IndexError(
            f"embedding id out of range [0, {table.shape[0]}): {idx.min()}..{idx.max()}"
        )

    def backward(g):
        if table.requires_grad:
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            np.add.at(table.grad, idx, g)

    return table.tape.record("embedding_lookup", table.data[idx], (table,), backward)


def dropout(x: Tensor, rate: float, mode: str, rng: Optional[RngStream]) -> Tensor:
    """Inverted dropout: zero with probability ``rate``, scale survivors.

    Identity in eval mode or at rate 0.
    """
    from .errors import ConfigError

    if not (0.0 <= rate < 1.0):
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if mode not in ("train", "eval"):
        raise ConfigError(f"dropout mode must be 'train' or 'eval', got {mode!r}")
    if mode == "eval" or rate == 0.0:
        return x
    if rng is None:
        raise ConfigError("dropout in train mode requires an rng stream")
    keep = (rng.random(x.shape) >= rate).astype(x.data.dtype)
    scale = 1.0 / (1.0 - rate)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * keep * scale)

    return x.tape.record("dropout", x.data * keep * scale, (x,), backward)


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    """Concatenate along one axis; backward splits the gradient."""
    tape = _same_tape(*parts)
    datas = [p.data for p in parts]
    ndim = datas[0].ndim
    ax = axis % ndim
    for d in datas[1:]:
        if d.ndim != ndim or any(d.shape[i] != datas[0].shape[i] for i in range(ndim) if i != ax):
            raise ShapeError(f"concat shapes {[p.shape for p in parts]} do not agree off axis {ax}")
    widths = [d.shape[ax] for d in datas]
    offsets = np.cumsum([0] + widths)

    def backward(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                sl = [slice(None)] * ndim
                sl[ax] = slice(lo, hi)
                p._accumulate(g[tuple(sl)])

    return tape.record("concat", np.concatenate(datas, axis=ax), tuple(parts), backward)


def reshape(x: Tensor, shape) -> Tensor:
    out_data = x.data.reshape(shape)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g.reshape(x.shape))

    return x.tape.record("reshape", out_data, (x,), backward)


def sum_all(x: Tensor) -> Tensor:
    def backward(g):
        if x.requires_grad:
            x._accumulate(np.full_like(x.data, float(g)))

    return x.tape.record("sum_all", np.asarray(x.data.sum()), (x,), backward)


def mean_all(x: Tensor) -> Tensor:
    n = x.size

    def backward(g):
        if x.requires_grad:
            x._accumulate(np.full_like(x.data, float(g) / n))

    return x.tape.record("mean_all", np.asarray(x.data.mean()), (x,), backward)


def sum_rows(x: Tensor) -> Tensor:
    """Sum a 2-D tensor over its last axis, giving one value per row."""
    if x.data.ndim != 2:
        raise ShapeError(f"sum_rows expects a 2-D tensor, got shape {x.shape}")

    def backward(g):
        if x.requires_grad:
            x._accumulate(np.repeat(g[:, None], x.shape[1], axis=1))

    return x.tape.record("sum_rows", x.data.sum(axis=1), (x,), backward)


def take_per_row(x: Tensor, ids: Sequence[int]) -> Tensor:
    """Pick one column per row of a 2-D tensor: out[i] = x[i, ids[i]]."""
    idx = np.asarray(ids, dtype=np.int64)
    if x.data.ndim != 2 or idx.shape != (x.shape[0],):
        raise ShapeError(f"take_per_row shapes {x.shape} and {idx.shape} do not agree")
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[1]):
        raise IndexError(f"column id out of range [0, {x.shape[1]})")
    rows = np.arange(x.shape[0])

    def backward(g):
        if x.requires_grad:
            if x.grad is None:
                x.grad = np.zeros_like(x.data)
            np.add.at(x.grad, (rows, idx), g)

    return x.tape.record("take_per_row", x.data[rows, idx], (x,), backward)
