"""Tape-based reverse-mode automatic differentiation over batched numpy arrays.

A :class:`Tape` is an append-only record of operations.  Every operation
stores its forward value and the indices of its inputs, so a single reverse
sweep yields the gradient of a scalar output with respect to all leaves.

Supported shapes are scalars ``()``, vectors ``(n,)`` and matrices ``(r, c)``.
Elementwise binary ops accept either identical shapes or a scalar operand on
one side; there is no general broadcasting.
"""
from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "AutodiffError",
    "Node",
    "Tape",
    "OPCODES",
    "backward",
    "grad_check",
]


class AutodiffError(ValueError):
    """Raised for invalid tape usage: bad shapes, domains or foreign nodes."""


class Node:
    """Reference to a value recorded on a tape."""

    __slots__ = ("tape", "index", "shape")

    def __init__(self, tape: "Tape", index: int, shape: tuple[int, ...]):
        self.tape = tape
        self.index = index
        self.shape = shape

    @property
    def value(self) -> np.ndarray:
        return self.tape.values[self.index]

    @property
    def requires_grad(self) -> bool:
        return self.tape.needs_grad[self.index]

    def __repr__(self) -> str:
        return f"Node(index={self.index}, shape={self.shape})"

    # identity is (tape, slot), so gradient dicts can be indexed by any handle
    def __eq__(self, other):
        return isinstance(other, Node) and other.tape is self.tape and other.index == self.index

    def __hash__(self):
        return hash((id(self.tape), self.index))

    # Operator sugar; python numbers become constant leaves.
    def __add__(self, other):
        return self.tape.apply("add", self, other)

    def __radd__(self, other):
        return self.tape.apply("add", other, self)

    def __sub__(self, other):
        return self.tape.apply("sub", self, other)

    def __rsub__(self, other):
        return self.tape.apply("sub", other, self)

    def __mul__(self, other):
        return self.tape.apply("mul", self, other)

    def __rmul__(self, other):
        return self.tape.apply("mul", other, self)

    def __truediv__(self, other):
        return self.tape.apply("div", self, other)

    def __rtruediv__(self, other):
        return self.tape.apply("div", other, self)

    def __neg__(self):
        return self.tape.apply("neg", self)


# ---------------------------------------------------------------------------
# primitive definitions.
# forward(values, attrs) -> array; vjp(g, out, values, attrs, need) -> input
# adjoints, where need[k] is False for inputs that carry no gradient (their
# adjoint may then be None and is never computed).


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    return np.asarray(g.sum())


def _binary_shape(a: tuple, b: tuple) -> tuple:
    if a == b or b == ():
        return a
    if a == ():
        return b
    raise AutodiffError(f"shape mismatch: {a} vs {b}")


def _fwd_add(v, attrs):
    return v[0] + v[1]


def _vjp_add(g, out, v, attrs, need):
    return (
        _unbroadcast(g, v[0].shape) if need[0] else None,
        _unbroadcast(g, v[1].shape) if need[1] else None,
    )


def _fwd_sub(v, attrs):
    return v[0] - v[1]


def _vjp_sub(g, out, v, attrs, need):
    return (
        _unbroadcast(g, v[0].shape) if need[0] else None,
        _unbroadcast(-g, v[1].shape) if need[1] else None,
    )


def _fwd_mul(v, attrs):
    return v[0] * v[1]


def _vjp_mul(g, out, v, attrs, need):
    return (
        _unbroadcast(g * v[1], v[0].shape) if need[0] else None,
        _unbroadcast(g * v[0], v[1].shape) if need[1] else None,
    )


def _fwd_div(v, attrs):
    if np.any(v[1] == 0.0):
        raise AutodiffError("division by zero")
    return v[0] / v[1]


def _vjp_div(g, out, v, attrs, need):
    ga = g / v[1]
    return (
        _unbroadcast(ga, v[0].shape) if need[0] else None,
        _unbroadcast(-ga * out, v[1].shape) if need[1] else None,
    )


def _fwd_neg(v, attrs):
    return -v[0]


def _vjp_neg(g, out, v, attrs, need):
    return (-g,)


def _fwd_square(v, attrs):
    return v[0] * v[0]


def _vjp_square(g, out, v, attrs, need):
    return (2.0 * g * v[0],)


def _fwd_exp(v, attrs):
    return np.exp(v[0])


def _vjp_exp(g, out, v, attrs, need):
    return (g * out,)


def _fwd_log(v, attrs):
    if np.any(v[0] <= 0.0):
        raise AutodiffError("log of non-positive value")
    return np.log(v[0])


def _vjp_log(g, out, v, attrs, need):
    return (g / v[0],)


def _fwd_tanh(v, attrs):
    return np.tanh(v[0])


def _vjp_tanh(g, out, v, attrs, need):
    return (g - g * out * out,)


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))


def _fwd_softplus(v, attrs):
    return _softplus(v[0])


def _vjp_softplus(g, out, v, attrs, need):
    return (g * _sigmoid(v[0]),)


def _fwd_log_sigmoid(v, attrs):
    return -_softplus(-v[0])


def _vjp_log_sigmoid(g, out, v, attrs, need):
    return (g * _sigmoid(-v[0]),)


def _fwd_matmul(v, attrs):
    a, b = v
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise AutodiffError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return a @ b


def _vjp_matmul(g, out, v, attrs, need):
    a, b = v
    return (g @ b.T if need[0] else None, a.T @ g if need[1] else None)


def _fwd_affine(v, attrs):
    x, w = v[0], v[1]
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[1]:
        raise AutodiffError(f"affine shape mismatch: x {x.shape}, W {w.shape}")
    y = x @ w.T
    if len(v) == 3:
        if v[2].shape != (w.shape[0],):
            raise AutodiffError(f"affine bias shape {v[2].shape} != ({w.shape[0]},)")
        y += v[2]
    return y


def _vjp_affine(g, out, v, attrs, need):
    x, w = v[0], v[1]
    grads = (g @ w if need[0] else None, g.T @ x if need[1] else None)
    if len(v) == 3:
        grads += (np.ones(g.shape[0]) @ g if need[2] else None,)
    return grads


def _fwd_sum(v, attrs):
    return np.asarray(v[0].sum())


def _vjp_sum(g, out, v, attrs, need):
    return (np.full(v[0].shape, g),)


def _fwd_mean(v, attrs):
    if v[0].size == 0:
        raise AutodiffError("mean of empty array")
    return np.asarray(v[0].mean())


def _vjp_mean(g, out, v, attrs, need):
    return (np.full(v[0].shape, g / v[0].size),)


def _fwd_column(v, attrs):
    x = v[0]
    if x.ndim != 2:
        raise AutodiffError("column expects a matrix")
    j = attrs["j"]
    return x[:, j : j + 1].copy()


def _vjp_column(g, out, v, attrs, need):
    gx = np.zeros(v[0].shape)
    j = attrs["j"]
    gx[:, j : j + 1] = g
    return (gx,)


def _fwd_concat(v, attrs):
    if any(a.ndim != 2 for a in v) or len({a.shape[0] for a in v}) != 1:
        raise AutodiffError(f"concat shape mismatch: {[a.shape for a in v]}")
    return np.concatenate(v, axis=1)


def _vjp_concat(g, out, v, attrs, need):
    bounds = np.cumsum([a.shape[1] for a in v])[:-1]
    return tuple(np.split(g, bounds, axis=1))


def _fwd_clip(v, attrs):
    return np.clip(v[0], attrs["lo"], attrs["hi"])


def _vjp_clip(g, out, v, attrs, need):
    inside = (v[0] >= attrs["lo"]) & (v[0] <= attrs["hi"])
    return (g * inside,)


def _fwd_segment(v, attrs):
    flat = v[0]
    if flat.ndim != 1:
        raise AutodiffError("segment expects a flat vector")
    start, shape = attrs["start"], attrs["shape"]
    stop = start + int(np.prod(shape))
    if stop > flat.shape[0]:
        raise AutodiffError("segment out of range")
    return flat[start:stop].reshape(shape).copy()


def _vjp_segment(g, out, v, attrs, need):
    gx = np.zeros(v[0].shape)
    start = attrs["start"]
    gx[start : start + g.size] = g.ravel()
    return (gx,)


_UNARY = {"neg", "square", "exp", "log", "tanh", "log_sigmoid", "softplus"}
_BINARY_EW = {"add", "sub", "mul", "div"}

_OPS: dict[str, tuple[Callable, Callable]] = {
    "add": (_fwd_add, _vjp_add),
    "sub": (_fwd_sub, _vjp_sub),
    "mul": (_fwd_mul, _vjp_mul),
    "div": (_fwd_div, _vjp_div),
    "neg": (_fwd_neg, _vjp_neg),
    "square": (_fwd_square, _vjp_square),
    "exp": (_fwd_exp, _vjp_exp),
    "log": (_fwd_log, _vjp_log),
    "tanh": (_fwd_tanh, _vjp_tanh),
    "log_sigmoid": (_fwd_log_sigmoid, _vjp_log_sigmoid),
    "softplus": (_fwd_softplus, _vjp_softplus),
    "matmul": (_fwd_matmul, _vjp_matmul),
    "affine": (_fwd_affine, _vjp_affine),
    "sum": (_fwd_sum, _vjp_sum),
    "mean": (_fwd_mean, _vjp_mean),
    # structural helpers
    "column": (_fwd_column, _vjp_column),
    "concat": (_fwd_concat, _vjp_concat),
    "clip": (_fwd_clip, _vjp_clip),
    "segment": (_fwd_segment, _vjp_segment),
}

OPCODES = frozenset(_OPS)


def _as_array(value) -> np.ndarray:
    if isinstance(value, float):
        if not math.isfinite(value):
            raise AutodiffError("non-finite leaf value")
        return np.array(value)
    arr = np.array(value, dtype=np.float64)
    if arr.ndim > 2:
        raise AutodiffError(f"only scalars, vectors and matrices are supported, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise AutodiffError("non-finite leaf value")
    return arr


_ONE_INPUT = _UNARY | {"sum", "mean", "column", "clip", "segment"}


class Tape:
    """Append-only operation record.  Single-threaded; build one per loss evaluation."""

    def __init__(self):
        self.values: list[np.ndarray] = []
        self.inputs: list[tuple[int, ...]] = []
        self.opcodes: list[str | None] = []
        self.attrs: list[dict | None] = []
        self.needs_grad: list[bool] = []

    def __len__(self) -> int:
        return len(self.values)

    def _push(self, value, opcode, inputs, attrs, needs_grad) -> Node:
        value.flags.writeable = False
        self.values.append(value)
        self.inputs.append(inputs)
        self.opcodes.append(opcode)
        self.attrs.append(attrs)
        self.needs_grad.append(needs_grad)
        return Node(self, len(self.values) - 1, value.shape)

    def leaf(self, value, requires_grad: bool = True) -> Node:
        return self._push(_as_array(value), None, (), None, requires_grad)

    def constant(self, value) -> Node:
        return self.leaf(value, requires_grad=False)

    def _coerce(self, x) -> Node:
        if isinstance(x, Node):
            if x.tape is not self:
                raise AutodiffError("node belongs to a different tape")
            return x
        return self.constant(x)

    def apply(self, op: str, *inputs, **attrs) -> Node:
        try:
            fwd = _OPS[op][0]
        except KeyError:
            raise AutodiffError(f"unknown opcode {op!r}") from None
        nodes = [self._coerce(x) for x in inputs]
        if op in _BINARY_EW:
            if len(nodes) != 2:
                raise AutodiffError(f"{op} takes two inputs")
            _binary_shape(nodes[0].shape, nodes[1].shape)
        elif op in _ONE_INPUT and len(nodes) != 1:
            raise AutodiffError(f"{op} takes one input")
        values = self.values
        out = fwd([values[n.index] for n in nodes], attrs)
        if type(out) is not np.ndarray:
            out = np.asarray(out, dtype=np.float64)
        idx = tuple(n.index for n in nodes)
        needs = self.needs_grad
        return self._push(out, op, idx, attrs, any(needs[i] for i in idx))


def backward(tape: Tape, output: Node, wrt: Iterable[Node] | None = None) -> dict[Node, np.ndarray]:
    """Gradients of the scalar ``output`` with respect to differentiable leaves.

    Returns a mapping keyed by leaf node.  With ``wrt`` given, only those leaves
    are returned; otherwise every differentiable leaf on the tape.  Leaves not
    reached by the sweep map to zeros.
    """
    if output.tape is not tape:
        raise AutodiffError("output belongs to a different tape")
    if output.shape != ():
        raise AutodiffError(f"backward needs a scalar output, got shape {output.shape}")
    n = output.index + 1
    adj: list[np.ndarray | None] = [None] * n
    adj[output.index] = np.asarray(1.0)
    values, inputs, opcodes, attrs, needs = tape.values, tape.inputs, tape.opcodes, tape.attrs, tape.needs_grad
    for i in range(output.index, -1, -1):
        g = adj[i]
        if g is None or opcodes[i] is None:
            continue
        ins = inputs[i]
        need = tuple(needs[j] for j in ins)
        grads = _OPS[opcodes[i]][1](g, values[i], [values[j] for j in ins], attrs[i], need)
        for j, nj, gj in zip(ins, need, grads):
            if nj:
                adj[j] = gj if adj[j] is None else adj[j] + gj
    if wrt is None:
        leaves = [Node(tape, i, values[i].shape) for i in range(len(tape)) if opcodes[i] is None and needs[i]]
    else:
        leaves = list(wrt)
    result = {}
    for leaf in leaves:
        g = adj[leaf.index] if leaf.index < n else None
        result[leaf] = np.zeros(leaf.shape) if g is None else np.asarray(g, dtype=np.float64).reshape(leaf.shape)
    return result


def grad_check(
    f: Callable[[Tape, Node], Node],
    point: Sequence[float] | np.ndarray,
    step: float = 1e-5,
    coords: Sequence[int] | None = None,
    floor: float = 1e-6,
) -> float:
    """Max relative error between the tape gradient and central differences.

    ``f(tape, p)`` must build a scalar node from the parameter leaf ``p``.  The
    per-coordinate relative error is ``|g - fd| / max(|g|, |fd|, floor)``; the
    floor keeps coordinates whose true derivative is ~0 from dominating.
    ``coords`` restricts the check to a subset of coordinates.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    p0 = np.array(point, dtype=np.float64).ravel()
    tape = Tape()
    leaf = tape.leaf(p0)
    out = f(tape, leaf)
    if not np.isfinite(out.value):
        raise AutodiffError("f is non-finite at the base point")
    g = backward(tape, out, [leaf])[leaf]

    def value_at(p):
        t = Tape()
        v = float(f(t, t.leaf(p, requires_grad=False)).value)
        if not np.isfinite(v):
            raise AutodiffError("f is non-finite at a probe point")
        return v

    idx = range(p0.size) if coords is None else coords
    worst = 0.0
    for i in idx:
        e = np.zeros_like(p0)
        e[i] = step
        fd = (value_at(p0 + e) - value_at(p0 - e)) / (2.0 * step)
        err = abs(g[i] - fd) / max(abs(g[i]), abs(fd), floor)
        worst = max(worst, err)
    return worst
