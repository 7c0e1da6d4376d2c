"""Monte Carlo collocation points on cubes, their faces and time slices."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .problems import Domain

RNG_ALGORITHM = "PCG64 (numpy SeedSequence, spawn_key=(purpose, call))"

PURPOSES = {"interior": 0, "boundary": 1, "initial": 2, "eval": 3, "init": 4}


def stream(seed: int, purpose: str, call: int = 0) -> np.random.Generator:
    """Generator fully determined by ``(seed, purpose, call)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(PURPOSES[purpose], int(call)))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass
class Batch:
    interior: np.ndarray
    boundary: np.ndarray
    normals: np.ndarray
    initial: np.ndarray | None
    domain: Domain

    @property
    def interior_measure(self) -> float:
        m = self.domain.interior_measure
        return m * self.domain.T if self.domain.time_dependent else m

    @property
    def boundary_measure(self) -> float:
        m = self.domain.boundary_measure
        return m * self.domain.T if self.domain.time_dependent else m

    @property
    def initial_measure(self) -> float:
        return self.domain.interior_measure


def _with_time(domain: Domain, x: np.ndarray, rng) -> np.ndarray:
    if not domain.time_dependent:
        return x
    t = rng.uniform(0.0, domain.T, size=(len(x), 1))
    return np.hstack([t, x])


def sample_interior(domain: Domain, n: int, rng: np.random.Generator) -> np.ndarray:
    if n < 1:
        raise ValueError("need at least one point")
    lo, hi = domain.bounds
    x = rng.uniform(lo, hi, size=(n, domain.d))
    return _with_time(domain, x, rng)


def sample_boundary(domain: Domain, m: int, rng: np.random.Generator):
    """Points uniform on the cube surface and their outward unit normals.

    A face is drawn uniformly from the ``2d`` faces (all have equal area), then
    the free coordinates uniformly.  Normals are spatial, shape ``(m, d)``.
    """
    if m < 1:
        raise ValueError("need at least one point")
    lo, hi = domain.bounds
    d = domain.d
    face = rng.integers(0, 2 * d, size=m)
    x = rng.uniform(lo, hi, size=(m, d))
    axis, upper = face // 2, face % 2 == 1
    rows = np.arange(m)
    x[rows, axis] = np.where(upper, hi, lo)
    normals = np.zeros((m, d))
    normals[rows, axis] = np.where(upper, 1.0, -1.0)
    return _with_time(domain, x, rng), normals


def sample_initial(domain: Domain, m: int, rng: np.random.Generator) -> np.ndarray:
    """Spatial points at ``t = 0`` (returned with the time column)."""
    lo, hi = domain.bounds
    x = rng.uniform(lo, hi, size=(m, domain.d))
    return np.hstack([np.zeros((m, 1)), x])


def periodic_partner(domain: Domain, x: np.ndarray, axis: int) -> np.ndarray:
    """Translate spatial coordinate ``axis`` (0-based) by one period."""
    if domain.kind != "torus":
        raise ValueError("periodic partners need a periodic domain")
    x = np.array(x, dtype=float, copy=True)
    col = axis + (1 if domain.time_dependent and x.shape[-1] == domain.d + 1 else 0)
    x[..., col] += 2 * math.pi
    return x


class Sampler:
    """Draws a fresh :class:`Batch` per iteration from independent per-purpose streams."""

    def __init__(self, domain: Domain, seed: int, n_interior=1024, n_boundary=256, n_initial=256):
        self.domain = domain
        self.seed = seed
        self.n_interior = n_interior
        self.n_boundary = n_boundary
        self.n_initial = n_initial

    def batch(self, call: int) -> Batch:
        interior = sample_interior(self.domain, self.n_interior, stream(self.seed, "interior", call))
        boundary, normals = sample_boundary(self.domain, self.n_boundary,
                                            stream(self.seed, "boundary", call))
        initial = None
        if self.domain.time_dependent:
            initial = sample_initial(self.domain, self.n_initial, stream(self.seed, "initial", call))
        return Batch(interior, boundary, normals, initial, self.domain)
