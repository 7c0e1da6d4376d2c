"""Reverse-mode tape over numpy arrays.

Every operation on a :class:`Var` appends one node to its tape.  A node keeps
the ids of its parents and a closure mapping the output adjoint to the
adjoints of those parents.  Backward walks the node list once, from the root
down to the first node.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class BindingError(ValueError):
    """A value from one tape was combined with a value from another."""


class TapeError(RuntimeError):
    pass


@dataclass
class _Node:
    value: np.ndarray
    parents: tuple[int, ...]
    vjp: object  # callable(g) -> tuple of parent adjoints, or None for leaves


@dataclass
class Adjoint:
    """Parameter gradients, one array per bound parameter vector."""

    grads: list[np.ndarray]

    @property
    def flat(self) -> np.ndarray:
        if not self.grads:
            return np.zeros(0)
        return np.concatenate([g.ravel() for g in self.grads])


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


class Tape:
    def __init__(self):
        self.nodes: list[_Node] = []
        self.bindings: list[int] = []

    def __len__(self):
        return len(self.nodes)

    def _push(self, value, parents=(), vjp=None) -> "Var":
        self.nodes.append(_Node(np.asarray(value, dtype=float), parents, vjp))
        return Var(self, len(self.nodes) - 1)

    def bind(self, params: np.ndarray) -> "Var":
        """Register a flat parameter vector as a differentiable leaf."""
        v = self._push(np.array(params, dtype=float, copy=True))
        self.bindings.append(v.index)
        return v

    def constant(self, value) -> "Var":
        return self._push(np.array(value, dtype=float, copy=True))

    def backward(self, root: "Var") -> Adjoint:
        if not isinstance(root, Var) or root.tape is not self:
            raise TapeError("root is not recorded on this tape")
        if root.value.size != 1:
            raise TapeError(f"backward needs a scalar root, got shape {root.value.shape}")
        adj: list = [None] * (root.index + 1)
        adj[root.index] = np.ones_like(root.value)
        for i in range(root.index, -1, -1):
            g = adj[i]
            node = self.nodes[i]
            if g is None or node.vjp is None:
                continue
            for p, gp in zip(node.parents, node.vjp(g)):
                if gp is None:
                    continue
                adj[p] = gp if adj[p] is None else adj[p] + gp
        grads = []
        for b in self.bindings:
            g = adj[b] if b <= root.index else None
            grads.append(np.zeros_like(self.nodes[b].value) if g is None else np.array(g))
        return Adjoint(grads)


def backward(root: "Var") -> Adjoint:
    return root.tape.backward(root)


def value_of(x):
    """Plain numpy value of a Var, or the argument itself."""
    return x.value if isinstance(x, Var) else x


def _tape_of(*xs) -> Tape:
    tape = None
    for x in xs:
        if isinstance(x, Var):
            if tape is None:
                tape = x.tape
            elif x.tape is not tape:
                raise BindingError("operands belong to different tapes")
    return tape


def _binary(a, b, value, ga, gb):
    """Record a binary op; ga/gb map the output adjoint to each operand's adjoint."""
    tape = _tape_of(a, b)
    parents, fns = [], []
    if isinstance(a, Var):
        parents.append(a.index)
        fns.append(ga)
    if isinstance(b, Var):
        parents.append(b.index)
        fns.append(gb)
    return tape._push(value, tuple(parents), lambda g: tuple(f(g) for f in fns))


class Var:
    """Handle to one node of a :class:`Tape`."""

    __slots__ = ("tape", "index")
    # make ndarray (op) Var defer to the reflected Var methods
    __array_ufunc__ = None

    def __init__(self, tape: Tape, index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self) -> np.ndarray:
        return self.tape.nodes[self.index].value

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"Var(#{self.index}, shape={self.shape})"

    def __add__(self, other):
        a, b = value_of(self), value_of(other)
        sa, sb = np.shape(a), np.shape(b)
        return _binary(self, other, a + b,
                       lambda g: _unbroadcast(g, sa), lambda g: _unbroadcast(g, sb))

    __radd__ = __add__

    def __sub__(self, other):
        a, b = value_of(self), value_of(other)
        sa, sb = np.shape(a), np.shape(b)
        return _binary(self, other, a - b,
                       lambda g: _unbroadcast(g, sa), lambda g: _unbroadcast(-g, sb))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        a, b = value_of(self), value_of(other)
        sa, sb = np.shape(a), np.shape(b)
        return _binary(self, other, a * b,
                       lambda g: _unbroadcast(g * b, sa), lambda g: _unbroadcast(g * a, sb))

    __rmul__ = __mul__

    def __truediv__(self, other):
        a, b = value_of(self), value_of(other)
        sa, sb = np.shape(a), np.shape(b)
        return _binary(self, other, a / b,
                       lambda g: _unbroadcast(g / b, sa),
                       lambda g: _unbroadcast(-g * a / (b * b), sb))

    def __rtruediv__(self, other):
        a, b = value_of(other), self.value
        sb = b.shape
        return self.tape._push(a / b, (self.index,),
                               lambda g: (_unbroadcast(-g * a / (b * b), sb),))

    def __neg__(self):
        return self.tape._push(-self.value, (self.index,), lambda g: (-g,))

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 1:
            raise ValueError("only positive integer powers are supported")
        a = self.value
        return self.tape._push(a**k, (self.index,), lambda g: (g * k * a ** (k - 1),))

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        a = self.value
        shape = a.shape

        basic = all(isinstance(i, (int, slice, type(None), type(Ellipsis)))
                    for i in (idx if isinstance(idx, tuple) else (idx,)))

        def vjp(g):
            out = np.zeros(shape)
            if basic:
                out[idx] += g
            else:
                np.add.at(out, idx, g)
            return (out,)

        return self.tape._push(a[idx], (self.index,), vjp)

    def reshape(self, *shape):
        old = self.shape
        return self.tape._push(self.value.reshape(*shape), (self.index,),
                               lambda g: (g.reshape(old),))

    def swapaxes(self, i, j):
        return self.tape._push(np.swapaxes(self.value, i, j), (self.index,),
                               lambda g: (np.swapaxes(g, i, j),))

    def sum(self, axis=None, keepdims=False):
        a = self.value
        shape = a.shape

        def vjp(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return self.tape._push(a.sum(axis=axis, keepdims=keepdims), (self.index,), vjp)

    def mean(self, axis=None):
        n = self.value.size if axis is None else self.value.shape[axis]
        return self.sum(axis=axis) * (1.0 / n)


def matmul(a, b):
    av, bv = value_of(a), value_of(b)
    sa, sb = np.shape(av), np.shape(bv)

    def ga(g):
        if len(sb) == 1:
            return _unbroadcast(np.multiply.outer(g, bv), sa)
        return _unbroadcast(g @ np.swapaxes(bv, -1, -2), sa)

    def gb(g):
        if len(sb) == 1:
            return _unbroadcast((av * g[..., None]).reshape(-1, sb[0]).sum(0), sb)
        return _unbroadcast(np.swapaxes(av, -1, -2) @ g, sb)

    return _binary(a, b, av @ bv, ga, gb)


def _unary(x, fn, dfn):
    if not isinstance(x, Var):
        return fn(x)
    a = x.value
    return x.tape._push(fn(a), (x.index,), lambda g: (g * dfn(a),))


def sin(x):
    return _unary(x, np.sin, np.cos)


def cos(x):
    return _unary(x, np.cos, lambda a: -np.sin(a))


def exp(x):
    if not isinstance(x, Var):
        return np.exp(x)
    out = np.exp(x.value)
    return x.tape._push(out, (x.index,), lambda g: (g * out,))


def concatenate(xs):
    """Concatenate Vars and/or arrays along the last axis, broadcasting the rest."""
    vals = [np.asarray(value_of(x), dtype=float) for x in xs]
    shapes = [v.shape for v in vals]
    lead = np.broadcast_shapes(*[s[:-1] for s in shapes])
    out = np.concatenate([np.broadcast_to(v, lead + v.shape[-1:]) for v in vals], axis=-1)
    if not any(isinstance(x, Var) for x in xs):
        return out
    tape = _tape_of(*xs)
    splits = np.cumsum([s[-1] for s in shapes])[:-1]
    slots = [i for i, x in enumerate(xs) if isinstance(x, Var)]

    def vjp(g):
        parts = np.split(g, splits, axis=-1)
        return tuple(_unbroadcast(parts[i], shapes[i]) for i in slots)

    return tape._push(out, tuple(xs[i].index for i in slots), vjp)


def sum_all(xs):
    """Sum of a list of Vars/arrays, left to right."""
    total = xs[0]
    for x in xs[1:]:
        total = total + x
    return total
