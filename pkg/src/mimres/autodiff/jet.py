"""Truncated Taylor jets in one or two directions.

A jet stores Taylor coefficients ``c[a] = D^a f / a!`` where ``a`` is a
multi-index over the seeded directions.  Coefficients are numpy arrays or tape
:class:`~mimres.autodiff.tape.Var` objects, so jet arithmetic is recorded on a
tape whenever one of its inputs is.  ``None`` marks a coefficient known to be
exactly zero and lets products skip work.

Coefficient arrays broadcast against each other: the value coefficient usually
has shape ``(B, 1, n)`` while higher coefficients carry a direction axis
``(B, D, n)``.
"""

from __future__ import annotations

import itertools
import math
from enum import Enum

import numpy as np

from . import tape as _t

MAX_ORDER_1 = 4
MAX_ORDER_2 = 2


class JetShapeError(ValueError):
    pass


class ActivationKind(str, Enum):
    SQUARE = "square"
    RELU = "relu"
    REQU = "requ"
    RECU = "recu"


def _add(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return a + b


def _mul(a, b):
    if a is None or b is None:
        return None
    return a * b


class Jet:
    """Jet over ``len(orders)`` directions truncated at ``orders`` per direction."""

    def __init__(self, orders: tuple[int, ...], coeffs: dict):
        self.orders = tuple(orders)
        self.coeffs = coeffs

    # -- construction -------------------------------------------------------
    @classmethod
    def zeros_like(cls, other: "Jet") -> "Jet":
        return cls(other.orders, {k: None for k in other.coeffs})

    def _new(self, coeffs):
        return Jet(self.orders, coeffs)

    def indices(self):
        return itertools.product(*(range(k + 1) for k in self.orders))

    def __getitem__(self, idx):
        """Index every coefficient's trailing axes, e.g. ``jet[..., 0]``."""
        return self._new({k: None if c is None else c[idx] for k, c in self.coeffs.items()})

    def coefficient(self, *multi):
        return self.coeffs[tuple(multi)]

    @property
    def value(self):
        return self.coeffs[(0,) * len(self.orders)]

    def _check(self, other: "Jet"):
        if self.orders != other.orders:
            raise JetShapeError(f"jet orders differ: {self.orders} vs {other.orders}")

    # -- arithmetic ---------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, Jet):
            self._check(other)
            return self._new({k: _add(c, other.coeffs[k]) for k, c in self.coeffs.items()})
        out = dict(self.coeffs)
        z = (0,) * len(self.orders)
        out[z] = _add(out[z], other)
        return self._new(out)

    __radd__ = __add__

    def __neg__(self):
        return self._new({k: None if c is None else -c for k, c in self.coeffs.items()})

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return self._new({k: _mul(c, other) for k, c in self.coeffs.items()})
        self._check(other)
        out = {}
        for k in self.indices():
            acc = None
            for j in itertools.product(*(range(i + 1) for i in k)):
                rest = tuple(a - b for a, b in zip(k, j))
                acc = _add(acc, _mul(self.coeffs[j], other.coeffs[rest]))
            out[k] = acc
        return self._new(out)

    __rmul__ = __mul__

    def linear(self, weight, bias=None) -> "Jet":
        """Apply ``c @ weight.T (+ bias on the value)`` to every coefficient."""
        wt = weight.swapaxes(0, 1) if isinstance(weight, _t.Var) else weight.T
        out = {k: None if c is None else c @ wt for k, c in self.coeffs.items()}
        if bias is not None:
            z = (0,) * len(self.orders)
            out[z] = _add(out[z], bias)
        return self._new(out)

    def sum(self, axis=-1, keepdims=True) -> "Jet":
        return self._new({k: None if c is None else c.sum(axis=axis, keepdims=keepdims)
                          for k, c in self.coeffs.items()})

    def _nilpotent(self):
        """Split into the value and the jet with zero constant term."""
        z = (0,) * len(self.orders)
        h = dict(self.coeffs)
        a0 = h[z]
        h[z] = None
        return a0, self._new(h)

    def _series(self, a0_terms, h: "Jet"):
        # sum_k a0_terms[k] * h**k, with h nilpotent of degree sum(orders)+1
        out = self._new({k: None for k in self.coeffs})
        z = (0,) * len(self.orders)
        out.coeffs[z] = a0_terms[0]
        power = None
        for k in range(1, sum(self.orders) + 1):
            power = h if power is None else power * h
            if a0_terms[k] is not None:
                out = out + power * a0_terms[k]
        return out

    def sin(self) -> "Jet":
        a0, h = self._nilpotent()
        s, c = _t.sin(a0), _t.cos(a0)
        # d^k/dx^k sin cycles sin, cos, -sin, -cos
        cyc = [s, c, -s, -c]
        terms = [cyc[k % 4] * (1.0 / math.factorial(k)) for k in range(sum(self.orders) + 1)]
        terms[0] = s
        return self._series(terms, h)

    def cos(self) -> "Jet":
        a0, h = self._nilpotent()
        s, c = _t.sin(a0), _t.cos(a0)
        cyc = [c, -s, -c, s]
        terms = [cyc[k % 4] * (1.0 / math.factorial(k)) for k in range(sum(self.orders) + 1)]
        terms[0] = c
        return self._series(terms, h)

    def exp(self) -> "Jet":
        a0, h = self._nilpotent()
        e = _t.exp(a0)
        terms = [e] + [e * (1.0 / math.factorial(k)) for k in range(1, sum(self.orders) + 1)]
        return self._series(terms, h)

    def derivative(self, *multi):
        """Mixed directional derivative ``D^multi f`` (coefficient times factorials)."""
        c = self.coeffs[tuple(multi)]
        scale = math.prod(math.factorial(m) for m in multi)
        if c is None:
            return None
        return c * float(scale) if scale != 1 else c


def Jet1(coeffs) -> Jet:
    """Univariate jet from coefficients ``c_0..c_K`` (K <= 4)."""
    coeffs = list(coeffs)
    if not 1 <= len(coeffs) <= MAX_ORDER_1 + 1:
        raise JetShapeError(f"Jet1 order must be in 0..{MAX_ORDER_1}")
    return Jet((len(coeffs) - 1,), {(k,): c for k, c in enumerate(coeffs)})


def Jet2(grid) -> Jet:
    """Bivariate jet from a ``(K1+1) x (K2+1)`` coefficient grid (K1, K2 <= 2)."""
    rows = [list(r) for r in grid]
    k1, k2 = len(rows) - 1, len(rows[0]) - 1
    if not (0 <= k1 <= MAX_ORDER_2 and 0 <= k2 <= MAX_ORDER_2) or \
            any(len(r) != k2 + 1 for r in rows):
        raise JetShapeError(f"Jet2 orders must be in 0..{MAX_ORDER_2}")
    return Jet((k1, k2), {(i, j): rows[i][j] for i in range(k1 + 1) for j in range(k2 + 1)})


def jet_add(a: Jet, b: Jet) -> Jet:
    return a + b


def jet_mul(a: Jet, b: Jet) -> Jet:
    return a * b


def jet_activation(kind: ActivationKind | str, a: Jet) -> Jet:
    """Push a jet through one of the activations.

    The rectified kinds are ``mask * polynomial`` with ``mask = value > 0``, so
    at exactly zero the result is the zero jet.
    """
    kind = ActivationKind(kind)
    if kind is ActivationKind.SQUARE:
        return a * a
    mask = np.asarray(_t.value_of(a.value) > 0, dtype=float)
    if kind is ActivationKind.RELU:
        return a * mask
    sq = a * a
    if kind is ActivationKind.REQU:
        return sq * mask
    return (sq * a) * mask


def activation(kind: ActivationKind | str, x):
    """Plain pointwise activation on arrays."""
    kind = ActivationKind(kind)
    if kind is ActivationKind.SQUARE:
        return x * x
    r = np.maximum(x, 0.0)
    return {ActivationKind.RELU: r, ActivationKind.REQU: r * r, ActivationKind.RECU: r ** 3}[kind]
