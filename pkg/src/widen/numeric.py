"""Dense float64 tensors with a small reverse-mode tape.

Every value is a numpy array whose last two axes are the matrix axes; any
leading axes are batch axes. Operations record themselves on the tape of
whichever input is tracked, so constants flow through without bookkeeping.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np

NORM_EPS = 1e-12


class DimensionError(ValueError):
    pass


class ContractError(ValueError):
    pass


class Tensor:
    __slots__ = ("value", "tape", "grad", "_parents", "_backward", "name")

    def __init__(self, value, tape: "Tape | None" = None, name: str | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.tape = tape
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def tracked(self) -> bool:
        return self.tape is not None

    def __repr__(self) -> str:
        tag = self.name or ("tracked" if self.tracked else "const")
        return f"Tensor({tag}, shape={self.shape})"


class Tape:
    """Records operations of one forward pass; single-writer, not shared."""

    def __init__(self):
        self.nodes: list[Tensor] = []

    def leaf(self, value, name: str | None = None) -> Tensor:
        t = Tensor(np.array(value, dtype=np.float64), self, name)
        self.nodes.append(t)
        return t

    def backward(self, loss: Tensor) -> None:
        if loss.tape is not self:
            raise ContractError("loss tensor is not recorded on this tape")
        if loss.value.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        for node in self.nodes:
            node.grad = None
        loss.grad = np.ones_like(loss.value)
        for node in reversed(self.nodes):
            if node.grad is None or node._backward is None:
                continue
            grads = node._backward(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is None or parent.tape is None:
                    continue
                if parent.grad is None:
                    parent.grad = g.copy() if g.base is not None else g
                else:
                    parent.grad = parent.grad + g


def constant(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _tape_of(*xs: Tensor) -> Tape | None:
    for x in xs:
        if x.tape is not None:
            return x.tape
    return None


def _record(value: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    tape = _tape_of(*parents)
    out = Tensor(value, tape)
    if tape is not None:
        out._parents = parents
        out._backward = backward
        tape.nodes.append(out)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_same(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# ---------------------------------------------------------------- linear ops


def matmul(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    if a.value.ndim < 2 or b.value.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    av, bv = a.value, b.value

    def back(g):
        ga = _unbroadcast(g @ np.swapaxes(bv, -1, -2), av.shape) if a.tracked else None
        gb = _unbroadcast(np.swapaxes(av, -1, -2) @ g, bv.shape) if b.tracked else None
        return ga, gb

    return _record(av @ bv, (a, b), back)


def transpose(a) -> Tensor:
    a = constant(a)
    return _record(np.swapaxes(a.value, -1, -2), (a,), lambda g: (np.swapaxes(g, -1, -2),))


def add(a, b) -> Tensor:
    """Broadcasting sum; used for biases and additive masks."""
    a, b = constant(a), constant(b)
    try:
        out = a.value + b.value
    except ValueError as exc:
        raise DimensionError(f"add: cannot broadcast {a.shape} with {b.shape}") from exc
    return _record(
        out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))
    )


def scale(a, factor: float) -> Tensor:
    a = constant(a)
    return _record(a.value * factor, (a,), lambda g: (g * factor,))


def elementwise_mul(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    try:
        out = a.value * b.value
    except ValueError as exc:
        raise DimensionError(f"elementwise_mul: shape mismatch {a.shape} vs {b.shape}") from exc
    av, bv = a.value, b.value
    return _record(
        out,
        (a, b),
        lambda g: (
            _unbroadcast(g * bv, av.shape) if a.tracked else None,
            _unbroadcast(g * av, bv.shape) if b.tracked else None,
        ),
    )


def maxpool_pair(a, b) -> Tensor:
    """Componentwise maximum; ties send the gradient to the first input."""
    a, b = constant(a), constant(b)
    _check_same(a, b, "maxpool_pair")
    pick_a = a.value >= b.value
    out = np.where(pick_a, a.value, b.value)
    return _record(out, (a, b), lambda g: (g * pick_a, g * ~pick_a))


def concat_cols(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    if a.shape[:-1] != b.shape[:-1]:
        raise DimensionError(f"concat_cols: leading shapes differ {a.shape} vs {b.shape}")
    k = a.shape[-1]
    out = np.concatenate([a.value, b.value], axis=-1)
    return _record(out, (a, b), lambda g: (g[..., :k], g[..., k:]))


def gather_rows(table, index) -> Tensor:
    """``table[index]`` for a 2-D table; backward scatter-adds into the rows."""
    table = constant(table)
    index = np.asarray(index, dtype=np.int64)
    n = table.shape[0]
    if index.size and (index.min() < 0 or index.max() >= n):
        raise IndexError(f"gather_rows: index out of range for {n} rows")
    shape = table.shape

    def back(g):
        out = np.zeros(shape)
        np.add.at(out, index.reshape(-1), g.reshape(-1, shape[-1]))
        return (out,)

    return _record(table.value[index], (table,), back)


def take_row(a, row: int) -> Tensor:
    """Keeps row ``row`` of every matrix as a 1-row matrix."""
    a = constant(a)
    shape = a.shape

    def back(g):
        out = np.zeros(shape)
        out[..., row : row + 1, :] = g
        return (out,)

    return _record(a.value[..., row : row + 1, :], (a,), back)


def reshape(a, shape: tuple[int, ...]) -> Tensor:
    a = constant(a)
    old = a.shape
    return _record(a.value.reshape(shape), (a,), lambda g: (g.reshape(old),))


def mean_axis(a, axis: int) -> Tensor:
    a = constant(a)
    n = a.shape[axis]
    shape = a.shape
    out = a.value.mean(axis=axis)
    return _record(
        out, (a,), lambda g: (np.broadcast_to(np.expand_dims(g, axis) / n, shape),)
    )


def total(a) -> Tensor:
    a = constant(a)
    shape = a.shape
    return _record(np.array(a.value.sum()).reshape(1, 1), (a,), lambda g: (np.full(shape, g.item()),))


def sum_squares(a) -> Tensor:
    a = constant(a)
    av = a.value
    return _record(np.array((av * av).sum()).reshape(1, 1), (a,), lambda g: (2.0 * g.item() * av,))


# ---------------------------------------------------------------- nonlinear ops


def relu(a) -> Tensor:
    a = constant(a)
    on = a.value > 0
    return _record(np.where(on, a.value, 0.0), (a,), lambda g: (g * on,))


def softmax_rows(a, mask=None) -> Tensor:
    """Row-wise softmax over the last axis.

    ``mask`` holds 0 or -inf per entry and is added to the scores; masked
    entries come out exactly 0. A row with every entry masked is rejected.
    """
    a = constant(a)
    scores = a.value
    if mask is not None:
        mask = np.asarray(mask, dtype=np.float64)
        if mask.shape != scores.shape and np.broadcast_shapes(mask.shape, scores.shape) != scores.shape:
            raise DimensionError(f"softmax_rows: mask {mask.shape} does not fit scores {scores.shape}")
        scores = scores + mask
    top = scores.max(axis=-1, keepdims=True)
    if np.isneginf(top).any():
        raise ContractError("softmax_rows: a row is entirely masked")
    e = np.exp(scores - top)
    y = e / e.sum(axis=-1, keepdims=True)

    def back(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _record(y, (a,), back)


def l2_normalize_row(a, eps: float = NORM_EPS, strict: bool = False) -> Tensor:
    """Divides each row by its L2 norm (plus ``eps``)."""
    a = constant(a)
    x = a.value
    n = np.sqrt((x * x).sum(axis=-1, keepdims=True))
    if strict and (n == 0).any():
        raise ContractError("l2_normalize_row: zero vector in strict mode")
    s = n + eps
    y = x / s

    def back(g):
        dot = (x * g).sum(axis=-1, keepdims=True)
        safe_n = np.where(n > 0, n, 1.0)
        return (g / s - x * dot / (safe_n * s * s),)

    return _record(y, (a,), back)


def cross_entropy(logits, labels, divisor: float | None = None) -> Tensor:
    """Summed negative log-likelihood of integer ``labels`` under row softmax,
    divided by ``divisor`` (defaults to the row count)."""
    logits = constant(logits)
    z = logits.value
    if z.ndim != 2:
        raise DimensionError(f"cross_entropy: expected 2-D logits, got {z.shape}")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (z.shape[0],):
        raise DimensionError(f"cross_entropy: {labels.shape[0]} labels for {z.shape[0]} rows")
    div = float(z.shape[0] if divisor is None else divisor)
    top = z.max(axis=1, keepdims=True)
    logp = z - top - np.log(np.exp(z - top).sum(axis=1, keepdims=True))
    rows = np.arange(z.shape[0])
    value = -logp[rows, labels].sum() / div

    def back(g):
        p = np.exp(logp)
        p[rows, labels] -= 1.0
        return (p * (g.item() / div),)

    return _record(np.array(value).reshape(1, 1), (logits,), back)


def log_softmax_rows(a) -> np.ndarray:
    z = np.asarray(a, dtype=np.float64)
    top = z.max(axis=-1, keepdims=True)
    return z - top - np.log(np.exp(z - top).sum(axis=-1, keepdims=True))


# ---------------------------------------------------------------- utilities


def merge_gradients(parts: Iterable[dict[str, np.ndarray]]) -> dict[str, np.ndarray]:
    """Sums per-tape gradient dicts in the order given."""
    merged: dict[str, np.ndarray] = {}
    for part in parts:
        for key, g in part.items():
            merged[key] = g.copy() if key not in merged else merged[key] + g
    return merged


def finite_diff_check(
    fn: Callable[[Tape, dict[str, Tensor]], Tensor],
    params: dict[str, np.ndarray],
    step: float = 1e-5,
) -> float:
    """Worst relative error between tape gradients and central differences.

    ``fn`` builds a scalar from tracked leaves on the tape it is handed. The
    relative error of each coordinate is ``|a - n| / max(|a|, |n|, 1e-8)``.
    """
    tape = Tape()
    leaves = {k: tape.leaf(v, k) for k, v in params.items()}
    loss = fn(tape, leaves)
    tape.backward(loss)
    worst = 0.0
    for key, base in params.items():
        analytic = leaves[key].grad
        if analytic is None:
            analytic = np.zeros_like(base)
        flat = np.array(base, dtype=np.float64)
        for pos in np.ndindex(flat.shape):
            vals = []
            for sign in (1.0, -1.0):
                probe = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
                probe[key][pos] = flat[pos] + sign * step
                t = Tape()
                out = fn(t, {k: t.leaf(v, k) for k, v in probe.items()}).value.item()
                if not math.isfinite(out):
                    raise ContractError(f"non-finite evaluation perturbing {key}{list(pos)}")
                vals.append(out)
            numeric = (vals[0] - vals[1]) / (2.0 * step)
            a = float(analytic[pos])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst
