"""Input derivatives of jet-valued functions.

``f`` is any callable mapping an input :class:`Jet` whose coefficients have a
trailing axis of length ``input_dim`` to an output jet with a trailing axis of
length ``out_dim``.  Points are passed as ``(B, input_dim)`` arrays; all
directions for one quantity are stacked on a second axis so a single pass of
``f`` computes them together.  Results keep the trailing output axis.
"""

from __future__ import annotations

import numpy as np

from . import tape as _t
from .jet import MAX_ORDER_1, Jet, Jet1, Jet2


class DerivativeOrderError(ValueError):
    pass


def _points(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x[None, :] if x.ndim == 1 else x


def seed_jet(x, directions, order: int) -> Jet:
    """Order-``order`` jet at points ``x`` (B, d) along each row of ``directions`` (D, d)."""
    if order > MAX_ORDER_1:
        raise DerivativeOrderError(f"order {order} exceeds supported {MAX_ORDER_1}")
    x = _points(x)
    dirs = np.atleast_2d(np.asarray(directions, dtype=float))
    coeffs = [x[:, None, :]]
    if order >= 1:
        coeffs.append(dirs[None])
    coeffs += [None] * (order - 1)
    return Jet1(coeffs[: order + 1])


def seed_jet2(x, first, second, orders: tuple[int, int]) -> Jet:
    x = _points(x)
    v = np.atleast_2d(np.asarray(first, dtype=float))[None]
    w = np.atleast_2d(np.asarray(second, dtype=float))[None]
    k1, k2 = orders
    grid = [[None] * (k2 + 1) for _ in range(k1 + 1)]
    grid[0][0] = x[:, None, :]
    if k1 >= 1:
        grid[1][0] = v
    if k2 >= 1:
        grid[0][1] = w
    return Jet2(grid)


def coefficient(jet: Jet, *multi, like=None):
    """Coefficient of ``jet``; structural zeros become explicit zero arrays."""
    c = jet.coeffs[tuple(multi)]
    if c is None:
        return np.zeros(np.shape(_t.value_of(like if like is not None else jet.value)))
    return c


def directional_derivs(f, x, v, order: int) -> list:
    """``f`` and its first ``order`` derivatives along ``v`` at ``x``.

    Entries are ``(B, out)``; a single point with scalar output yields floats.
    """
    if order > MAX_ORDER_1:
        raise DerivativeOrderError(f"order {order} exceeds supported {MAX_ORDER_1}")
    single = np.ndim(x) <= 1
    out = f(seed_jet(np.atleast_1d(np.asarray(x, dtype=float)),
                     np.atleast_1d(np.asarray(v, dtype=float)), order))
    res, fact = [], 1.0
    for k in range(order + 1):
        fact *= max(k, 1)
        c = coefficient(out, k)
        res.append(c[:, 0] * fact)
    if single:
        res = [r if isinstance(r, _t.Var) or np.size(r) != 1 else float(np.asarray(r).ravel()[0])
               for r in res]
    return res


def gradient(f, x):
    """``(B, d, out)`` first derivatives along each coordinate axis."""
    x = _points(x)
    d = x.shape[1]
    out = f(seed_jet(x, np.eye(d), 1))
    return coefficient(out, 1)


def laplacian(f, x, axes=None):
    """``(B, out)`` Laplacian; ``axes`` restricts the sum to some coordinates."""
    x = _points(x)
    d = x.shape[1]
    axes = range(d) if axes is None else axes
    dirs = np.eye(d)[list(axes)]
    out = f(seed_jet(x, dirs, 2))
    return coefficient(out, 2).sum(axis=1) * 2.0


def hessian(f, x):
    """``(B, out, d, d)`` Hessian from second directional derivatives.

    Off-diagonal entries use ``d_ij f = (D^2_{e_i+e_j} f - D^2_{e_i} f - D^2_{e_j} f) / 2``.
    """
    x = _points(x)
    d = x.shape[1]
    dirs, assemble = _polarization(d)
    out = f(seed_jet(x, dirs, 2))
    second = coefficient(out, 2) * 2.0  # (B, D, out)
    flat = second.swapaxes(1, 2) @ assemble  # (B, out, d*d)
    b, o = flat.shape[0], flat.shape[1]
    return flat.reshape(b, o, d, d)


def _polarization(d: int):
    pairs = [(i, j) for i in range(d) for j in range(i + 1, d)]
    dirs = np.vstack([np.eye(d)] + [np.eye(d)[i] + np.eye(d)[j] for i, j in pairs]) \
        if pairs else np.eye(d)
    assemble = np.zeros((len(dirs), d * d))
    for i in range(d):
        assemble[i, i * d + i] = 1.0
    for p, (i, j) in enumerate(pairs):
        row = d + p
        for a, b in ((i, j), (j, i)):
            assemble[row, a * d + b] += 0.5
            assemble[i, a * d + b] -= 0.5
            assemble[j, a * d + b] -= 0.5
    return dirs, assemble


def third_derivatives(f, x, axes=None):
    """``(B, len(axes), out)`` pure third derivatives along coordinate axes."""
    x = _points(x)
    d = x.shape[1]
    axes = range(d) if axes is None else axes
    out = f(seed_jet(x, np.eye(d)[list(axes)], 3))
    return coefficient(out, 3) * 6.0


def bilaplacian(f, x):
    """``(B, out)`` biharmonic operator, one order-(2,2) jet per unordered axis pair."""
    x = _points(x)
    d = x.shape[1]
    pairs = [(i, j) for i in range(d) for j in range(i, d)]
    eye = np.eye(d)
    out = f(seed_jet2(x, eye[[i for i, _ in pairs]], eye[[j for _, j in pairs]], (2, 2)))
    # c22 = d_i^2 d_j^2 f / 4; off-diagonal pairs count twice in the double sum
    weights = np.array([4.0 if i == j else 8.0 for i, j in pairs])[None, :, None]
    return (coefficient(out, 2, 2) * weights).sum(axis=1)


def grad_laplacian(f, x):
    """``(B, d, out)`` gradient of the Laplacian, via order-(1,2) jets over all ordered pairs."""
    x = _points(x)
    d = x.shape[1]
    eye = np.eye(d)
    first = np.repeat(eye, d, axis=0)  # pair (i, j) -> row i*d + j
    second = np.tile(eye, (d, 1))
    out = f(seed_jet2(x, first, second, (1, 2)))
    c12 = coefficient(out, 1, 2)  # d_i d_j^2 f / 2
    b = np.shape(_t.value_of(c12))[0]
    o = np.shape(_t.value_of(c12))[-1]
    return c12.reshape(b, d, d, o).sum(axis=2) * 2.0
