"""Dense float64 tensors with a dynamic reverse-mode differentiation tape.

Every learned operation in the package is written against :class:`Tensor`.
A forward op records itself (inputs plus a backward rule) whenever one of its
inputs requires gradients; :func:`backward` linearises those records into a
:class:`Tape` and replays them in reverse.
"""

from __future__ import annotations

import contextlib
import json
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (evaluation, finite differences)."""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "parents", "backward_fn", "op", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.parents: tuple[Tensor, ...] = ()
        self.backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.op = "leaf"
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def values(self) -> list[float]:
        """Row-major flat view of the data."""
        return self.data.ravel().tolist()

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"tensor of shape {self.shape} is not a scalar")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return mul(self, 1.0 / float(other))

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    @property
    def T(self) -> Tensor:
        return swapaxes(self, -1, -2)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn, op: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.op = op
    out.name = None
    out.requires_grad = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    if out.requires_grad:
        out.parents = parents
        out.backward_fn = backward_fn
    else:
        out.parents = ()
        out.backward_fn = None
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")

    def backward_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record(a.data + b.data, (a, b), backward_fn, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")

    def backward_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _record(a.data - b.data, (a, b), backward_fn, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")

    def backward_fn(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _record(a.data * b.data, (a, b), backward_fn, "mul")


def relu(x: Tensor) -> Tensor:
    positive = x.data > 0
    return _record(np.where(positive, x.data, 0.0), (x,), lambda g: (g * positive,), "relu")


def sigmoid(x: Tensor) -> Tensor:
    # split by sign so exp never overflows
    d = x.data
    e = np.exp(-np.abs(d))
    s = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _record(s, (x,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)
    return _record(t, (x,), lambda g: (g * (1.0 - t * t),), "tanh")


def exp(x: Tensor) -> Tensor:
    e = np.exp(x.data)
    return _record(e, (x,), lambda g: (g * e,), "exp")


def log(x: Tensor) -> Tensor:
    return _record(np.log(x.data), (x,), lambda g: (g / x.data,), "log")


def softplus(x: Tensor) -> Tensor:
    """log(1 + exp(x)), computed stably."""
    d = x.data
    out = np.maximum(d, 0.0) + np.log1p(np.exp(-np.abs(d)))
    e = np.exp(-np.abs(d))
    slope = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _record(out, (x,), lambda g: (g * slope,), "softplus")


def masked_fill(x: Tensor, mask, value: float) -> Tensor:
    """Replace entries where ``mask`` is true with a constant; those entries get no gradient."""
    mask = np.asarray(mask, dtype=bool)
    try:
        np.broadcast_shapes(x.shape, mask.shape)
    except ValueError:
        raise ShapeError(f"masked_fill: shapes {x.shape} and {mask.shape} do not broadcast") from None
    out = np.where(mask, value, x.data)
    return _record(out, (x,), lambda g: (_unbroadcast(np.where(mask, 0.0, g), x.shape),), "masked_fill")


# ---------------------------------------------------------------- linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs operands of rank >= 2, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are not aligned")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError(f"matmul: batch shapes {a.shape} and {b.shape} do not broadcast") from None

    def backward_fn(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2)) if a.requires_grad else None
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g) if b.requires_grad else None
        return (
            None if ga is None else _unbroadcast(ga, a.shape),
            None if gb is None else _unbroadcast(gb, b.shape),
        )

    return _record(out, (a, b), backward_fn, "matmul")


# ---------------------------------------------------------------- shape ops


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors[1:]:
        if len(t.shape) != len(ref) or any(
            i != ax and m != n for i, (m, n) in enumerate(zip(t.shape, ref))
        ):
            raise ShapeError(f"concat along axis {axis}: shapes {ref} and {t.shape} differ off-axis")
    sizes = [t.shape[ax] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def backward_fn(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _record(np.concatenate([t.data for t in tensors], axis=ax), tuple(tensors), backward_fn, "concat")


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    return _record(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape")


def swapaxes(x: Tensor, a1: int, a2: int) -> Tensor:
    return _record(np.swapaxes(x.data, a1, a2), (x,), lambda g: (np.swapaxes(g, a1, a2),), "swapaxes")


def getitem(x: Tensor, index) -> Tensor:
    def backward_fn(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return (full,)

    return _record(x.data[index], (x,), backward_fn, "getitem")


def take(table: Tensor, ids) -> Tensor:
    """Embedding lookup: rows of ``table`` (along axis 0) selected by integer ``ids``."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"take: ids out of range for table of shape {table.shape}")

    def backward_fn(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids.reshape(-1), g.reshape((-1,) + table.shape[1:]))
        return (full,)

    return _record(table.data[ids], (table,), backward_fn, "take")


embedding = take


# ---------------------------------------------------------------- reductions


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _record(np.asarray(out), (x,), backward_fn, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / float(count))


def max(x: Tensor, axis: int = -1, keepdims: bool = False) -> Tensor:  # noqa: A001
    """Max reduction; ties resolve to the lowest index for a deterministic backward."""
    idx = np.expand_dims(np.argmax(x.data, axis=axis), axis)
    out = np.take_along_axis(x.data, idx, axis=axis)
    if not keepdims:
        out = np.squeeze(out, axis=axis)

    def backward_fn(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        full = np.zeros_like(x.data)
        np.put_along_axis(full, idx, g, axis=axis)
        return (full,)

    return _record(out, (x,), backward_fn, "max")


def _check_softmax_rows(x: Tensor, axis: int) -> None:
    if np.isneginf(x.data).all(axis=axis).any():
        raise ValueError(f"softmax over a fully masked row (input shape {x.shape}, axis {axis})")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    _check_softmax_rows(x, axis)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=axis, keepdims=True)

    def backward_fn(g):
        return (p * (g - (g * p).sum(axis=axis, keepdims=True)),)

    return _record(p, (x,), backward_fn, "softmax")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    _check_softmax_rows(x, axis)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    p = np.exp(out)

    def backward_fn(g):
        g = np.where(np.isneginf(x.data), 0.0, g)
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return _record(out, (x,), backward_fn, "log_softmax")


# ---------------------------------------------------------------- tape


class Tape:
    """Ordered op records reachable from an output, inputs before consumers."""

    def __init__(self, records: list[Tensor]):
        self.records = records

    @classmethod
    def from_output(cls, output: Tensor) -> Tape:
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(output, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node.parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        return cls(order)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def is_topological(self) -> bool:
        position = {id(t): i for i, t in enumerate(self.records)}
        return all(
            position[id(p)] < position[id(t)] for t in self.records for p in t.parents if p.requires_grad
        )


def backward(loss: Tensor, tape: Tape | None = None) -> Tape:
    """Accumulate d(loss)/d(t) into ``t.grad`` for every tensor on the tape."""
    if loss.data.size != 1 or loss.ndim > 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ValueError("loss is not on the tape (no input requires gradients)")
    tape = tape or Tape.from_output(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.records):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.backward_fn is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        node.grad = g
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg
    return tape


# ---------------------------------------------------------------- checking


def finite_diff_check(f: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-5) -> float:
    """Max relative error between analytic gradients and central differences.

    ``f`` is re-evaluated with each parameter entry nudged by +/- eps; the
    relative error per entry is |a - n| / max(1e-8, |a| + |n|).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    for p in params:
        p.grad = None
    loss = f()
    if not np.all(np.isfinite(loss.data)):
        raise ValueError("f returned a non-finite value")
    if loss.requires_grad:
        backward(loss)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    worst = 0.0
    with no_grad():
        for p, a in zip(params, analytic):
            flat = p.data.reshape(-1)
            a_flat = a.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                up = f().item()
                flat[i] = orig - eps
                down = f().item()
                flat[i] = orig
                if not (np.isfinite(up) and np.isfinite(down)):
                    raise ValueError("f returned a non-finite value under perturbation")
                numeric = (up - down) / (2.0 * eps)
                err = abs(a_flat[i] - numeric) / np.maximum(1e-8, abs(a_flat[i]) + abs(numeric))
                worst = np.maximum(worst, err)
    return float(worst)


# ---------------------------------------------------------------- checkpoints


def save_checkpoint(path: str | Path, params: dict[str, Tensor], extra: dict | None = None) -> None:
    """Write ``{name: {"shape", "values"}}`` as JSON; names follow ``module.layer.tensor``."""
    payload = {
        "params": {name: {"shape": list(t.shape), "values": t.values} for name, t in params.items()}
    }
    if extra:
        payload["meta"] = extra
    Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    arrays = {}
    for name, entry in payload["params"].items():
        values = np.asarray(entry["values"], dtype=np.float64)
        shape = tuple(entry["shape"])
        if int(np.prod(shape)) != values.size:
            raise ValueError(f"checkpoint entry {name!r}: shape {shape} holds {values.size} values")
        arrays[name] = values.reshape(shape)
    return arrays, payload.get("meta", {})


def parameters_finite(params: Iterable[Tensor]) -> bool:
    return all(np.all(np.isfinite(p.data)) for p in params)
