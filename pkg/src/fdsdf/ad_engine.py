"""Reverse-mode automatic differentiation over a recorded tape.

Nodes hold numpy values (0-d arrays for scalars, batched arrays for point
sets, matrices for weights).  Every primitive is first order: ``backward``
walks the tape once and never records new nodes, so a loss that contains
spatial gradients (computed by forward-mode tangent propagation, see
:class:`TangentTriple`) is differentiated w.r.t. parameters without any
second-order reverse pass.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence

import numpy as np

from . import kernels

__all__ = [
    "Tape",
    "ScalarNode",
    "TangentTriple",
    "TapeMismatchError",
    "PRIMITIVES",
    "backward",
    "record",
]


class TapeMismatchError(ValueError):
    """Raised when nodes from different tapes are combined."""


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    ndim_extra = grad.ndim - len(shape)
    if ndim_extra > 0:
        grad = grad.sum(axis=tuple(range(ndim_extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _safe_sqrt_vjp(g, vals, out, attrs):
    # subgradient 0 at the origin instead of inf
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.where(out > 0, 0.5 / np.where(out > 0, out, 1.0), 0.0)
    return (g * d,)


def _sum_vjp(g, vals, out, attrs):
    axis = attrs.get("axis")
    x = vals[0]
    if axis is None:
        return (np.broadcast_to(g, x.shape).copy(),)
    return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)


def _mean_vjp(g, vals, out, attrs):
    axis = attrs.get("axis")
    x = vals[0]
    n = x.size if axis is None else x.shape[axis]
    (gs,) = _sum_vjp(g, vals, out, attrs)
    return (gs / n,)


@dataclass(frozen=True)
class Primitive:
    name: str
    forward: Callable
    vjp: Callable


# forward(vals, attrs) -> value ; vjp(g, vals, out, attrs) -> grads per parent
PRIMITIVES: Dict[str, Primitive] = {
    p.name: p
    for p in [
        Primitive("add", lambda v, a: v[0] + v[1],
                  lambda g, v, o, a: (_unbroadcast(g, v[0].shape), _unbroadcast(g, v[1].shape))),
        Primitive("sub", lambda v, a: v[0] - v[1],
                  lambda g, v, o, a: (_unbroadcast(g, v[0].shape), _unbroadcast(-g, v[1].shape))),
        Primitive("mul", lambda v, a: v[0] * v[1],
                  lambda g, v, o, a: (_unbroadcast(g * v[1], v[0].shape),
                                      _unbroadcast(g * v[0], v[1].shape))),
        Primitive("div", lambda v, a: v[0] / v[1],
                  lambda g, v, o, a: (_unbroadcast(g / v[1], v[0].shape),
                                      _unbroadcast(-g * v[0] / (v[1] * v[1]), v[1].shape))),
        Primitive("neg", lambda v, a: -v[0], lambda g, v, o, a: (-g,)),
        Primitive("scale", lambda v, a: v[0] * a["c"], lambda g, v, o, a: (g * a["c"],)),
        Primitive("shift", lambda v, a: v[0] + a["c"], lambda g, v, o, a: (g,)),
        Primitive("square", lambda v, a: v[0] * v[0], lambda g, v, o, a: (2.0 * g * v[0],)),
        Primitive("pow", lambda v, a: v[0] ** a["p"],
                  lambda g, v, o, a: (g * a["p"] * v[0] ** (a["p"] - 1),)),
        Primitive("sqrt", lambda v, a: np.sqrt(v[0]), _safe_sqrt_vjp),
        Primitive("abs", lambda v, a: np.abs(v[0]), lambda g, v, o, a: (g * np.sign(v[0]),)),
        Primitive("exp", lambda v, a: np.exp(v[0]), lambda g, v, o, a: (g * o,)),
        # "_other" caches the complementary trig value computed alongside the output
        Primitive("sin", lambda v, a: np.sin(v[0]),
                  lambda g, v, o, a: (g * (a["_other"] if "_other" in a else np.cos(v[0])),)),
        Primitive("cos", lambda v, a: np.cos(v[0]),
                  lambda g, v, o, a: (-g * (a["_other"] if "_other" in a else np.sin(v[0])),)),
        Primitive("sum", lambda v, a: np.sum(v[0], axis=a.get("axis")), _sum_vjp),
        Primitive("mean", lambda v, a: np.mean(v[0], axis=a.get("axis")), _mean_vjp),
        Primitive("reshape", lambda v, a: np.reshape(v[0], a["shape"]),
                  lambda g, v, o, a: (np.reshape(g, v[0].shape),)),
        # x @ W.T + b  (x: (N, in), W: (out, in), b: (out,))
        Primitive("affine", lambda v, a: v[0] @ v[1].T + v[2],
                  lambda g, v, o, a: (g @ v[1], g.T @ v[0], g.sum(axis=0))),
        # x @ W.T, used for tangent propagation through a layer
        Primitive("linear", lambda v, a: v[0] @ v[1].T,
                  lambda g, v, o, a: (_unbroadcast(g @ v[1], v[0].shape),
                                      (g.T @ v[0]) if v[0].shape[0] == g.shape[0]
                                      else np.outer(g.sum(axis=0), v[0][0]))),
    ]
}


class Tape:
    """Append-only record of primitive operations.

    One tape per training iteration; it is discarded after the optimizer
    step.  The tape is topologically ordered by construction since a node can
    only reference parents that already exist.
    """

    def __init__(self):
        self.ops: List[str] = []
        self.parents: List[tuple] = []
        self.attrs: List[dict] = []
        self.values: List[np.ndarray] = []
        self._trig: Dict[int, tuple] = {}

    def __len__(self) -> int:
        return len(self.values)

    def leaf(self, value) -> "ScalarNode":
        """Add an input node (parameter or constant)."""
        return self._append("leaf", (), {}, np.asarray(value, dtype=np.float64))

    const = leaf

    def record(self, op: str, parents: Sequence["ScalarNode"], **attrs) -> "ScalarNode":
        """Append primitive ``op`` applied to ``parents`` and return the new node."""
        prim = PRIMITIVES[op]
        idx = []
        for p in parents:
            if not isinstance(p, ScalarNode) or p.tape is not self:
                raise TapeMismatchError(f"{op}: parent does not belong to this tape")
            idx.append(p.index)
        if op in ("sin", "cos"):
            return self._trig_node(op, idx[0])
        value = prim.forward([self.values[i] for i in idx], attrs)
        return self._append(op, tuple(idx), attrs, np.asarray(value, dtype=np.float64))

    def _trig_node(self, op, parent):
        # sin and cos of one argument share a single fused evaluation
        if parent not in self._trig:
            self._trig[parent] = kernels.sincos(self.values[parent])
        s, c = self._trig[parent]
        value, other = (s, c) if op == "sin" else (c, s)
        return self._append(op, (parent,), {"_other": other}, value)

    def _append(self, op, parents, attrs, value) -> "ScalarNode":
        self.ops.append(op)
        self.parents.append(parents)
        self.attrs.append(attrs)
        self.values.append(value)
        return ScalarNode(self, len(self.values) - 1)

    def census(self) -> Counter:
        """Count of recorded nodes per primitive type."""
        return Counter(self.ops)

    def replay(self, overrides: Optional[Dict[int, np.ndarray]] = None) -> List[np.ndarray]:
        """Re-evaluate the recorded graph, optionally with new leaf values.

        Returns a fresh list of values; the tape itself is not modified.
        """
        overrides = overrides or {}
        vals: List[np.ndarray] = []
        for i, op in enumerate(self.ops):
            if op == "leaf":
                vals.append(np.asarray(overrides.get(i, self.values[i]), dtype=np.float64))
            else:
                pv = [vals[j] for j in self.parents[i]]
                vals.append(np.asarray(PRIMITIVES[op].forward(pv, self.attrs[i]), dtype=np.float64))
        return vals

    def backward(self, root: "ScalarNode") -> Dict[int, np.ndarray]:
        """Adjoints of ``root`` w.r.t. every node that influences it."""
        if not isinstance(root, ScalarNode) or root.tape is not self:
            raise TapeMismatchError("root is not on this tape")
        if self.values[root.index].size != 1:
            raise ValueError("backward needs a scalar root")
        adj: Dict[int, np.ndarray] = {root.index: np.ones_like(self.values[root.index])}
        for i in range(root.index, -1, -1):
            g = adj.get(i)
            if g is None or self.ops[i] == "leaf":
                continue
            par = self.parents[i]
            pv = [self.values[j] for j in par]
            grads = PRIMITIVES[self.ops[i]].vjp(g, pv, self.values[i], self.attrs[i])
            for j, gj in zip(par, grads):
                if j in adj:
                    adj[j] = adj[j] + gj
                else:
                    adj[j] = gj
        return adj

    def grad(self, root: "ScalarNode", wrt: Iterable["ScalarNode"]) -> List[np.ndarray]:
        adj = self.backward(root)
        return [adj.get(n.index, np.zeros_like(n.value)) for n in wrt]


def _lift(tape: Tape, x) -> "ScalarNode":
    if isinstance(x, ScalarNode):
        return x
    return tape.const(x)


class ScalarNode:
    """Handle to one value on a :class:`Tape`."""

    __slots__ = ("tape", "index")

    def __init__(self, tape: Tape, index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self) -> np.ndarray:
        return self.tape.values[self.index]

    @property
    def shape(self) -> tuple:
        return self.value.shape

    def __repr__(self) -> str:
        return f"ScalarNode(#{self.index} {self.tape.ops[self.index]}, shape={self.shape})"

    def _bin(self, op, other, rop=False):
        if not isinstance(other, ScalarNode) and np.ndim(other) == 0:
            if op == "add":
                return self.tape.record("shift", [self], c=float(other))
            if op == "mul":
                return self.tape.record("scale", [self], c=float(other))
            if op == "sub" and not rop:
                return self.tape.record("shift", [self], c=-float(other))
            if op == "div" and not rop:
                return self.tape.record("scale", [self], c=1.0 / float(other))
        if not isinstance(other, ScalarNode):
            other = self.tape.const(other)
        a, b = (other, self) if rop else (self, other)
        return self.tape.record(op, [a, b])

    def __add__(self, o):
        return self._bin("add", o)

    __radd__ = __add__

    def __sub__(self, o):
        return self._bin("sub", o)

    def __rsub__(self, o):
        return self._bin("sub", o, rop=True)

    def __mul__(self, o):
        return self._bin("mul", o)

    __rmul__ = __mul__

    def __truediv__(self, o):
        return self._bin("div", o)

    def __rtruediv__(self, o):
        return self._bin("div", o, rop=True)

    def __neg__(self):
        return self.tape.record("neg", [self])

    def __pow__(self, p):
        if p == 2:
            return self.tape.record("square", [self])
        return self.tape.record("pow", [self], p=float(p))

    def sin(self):
        return self.tape.record("sin", [self])

    def cos(self):
        return self.tape.record("cos", [self])

    def exp(self):
        return self.tape.record("exp", [self])

    def abs(self):
        return self.tape.record("abs", [self])

    __abs__ = abs

    def sqrt(self):
        return self.tape.record("sqrt", [self])

    def sum(self, axis=None):
        return self.tape.record("sum", [self], axis=axis)

    def mean(self, axis=None):
        return self.tape.record("mean", [self], axis=axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return self.tape.record("reshape", [self], shape=tuple(shape))


@dataclass
class TangentTriple:
    """Field value and its spatial partials, each a differentiable node."""

    value: ScalarNode
    dx: ScalarNode
    dy: ScalarNode
    dz: ScalarNode

    @property
    def partials(self) -> tuple:
        return (self.dx, self.dy, self.dz)

    def gradient_array(self) -> np.ndarray:
        """Detached (N, 3) gradient values."""
        return np.stack([np.atleast_1d(d.value) for d in self.partials], axis=-1)

    def grad_norm(self) -> ScalarNode:
        return (self.dx * self.dx + self.dy * self.dy + self.dz * self.dz).sqrt()

    def directional(self, u) -> ScalarNode:
        """Directional derivative along ``u`` (constant vector or (N, 3) array)."""
        u = np.asarray(u, dtype=np.float64)
        return self.dx * u[..., 0] + self.dy * u[..., 1] + self.dz * u[..., 2]


def record(tape: Tape, op: str, parents: Sequence[ScalarNode], **attrs) -> ScalarNode:
    return tape.record(op, parents, **attrs)


def backward(tape: Tape, root: ScalarNode) -> Dict[int, np.ndarray]:
    return tape.backward(root)
