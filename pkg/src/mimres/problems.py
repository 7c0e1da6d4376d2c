"""The four benchmark problems as immutable data.

Point arrays are ``(N, input_dim)``.  For the time-dependent KdV problem the
time coordinate comes first: ``(t, x_1, ..., x_d)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .autodiff.jet import Jet
from .network import ProblemKind

PI = math.pi


@dataclass(frozen=True)
class Domain:
    kind: str  # "unit" [0,1]^d, "symmetric" [-1,1]^d, "torus" [0,2pi]^d
    d: int
    T: Optional[float] = None

    @property
    def bounds(self) -> tuple[float, float]:
        return {"unit": (0.0, 1.0), "symmetric": (-1.0, 1.0), "torus": (0.0, 2 * PI)}[self.kind]

    @property
    def side(self) -> float:
        lo, hi = self.bounds
        return hi - lo

    @property
    def time_dependent(self) -> bool:
        return self.T is not None

    @property
    def interior_measure(self) -> float:
        return self.side**self.d

    @property
    def boundary_measure(self) -> float:
        return 2 * self.d * self.side ** (self.d - 1)


@dataclass(frozen=True)
class ProblemSpec:
    kind: ProblemKind
    domain: Domain
    forcing: Callable
    u: Callable
    grad_u: Callable
    solution_jet: Callable  # input Jet -> {"u": Jet, "p": Jet, ...}
    residual: Callable  # PDE residual of the exact solution from analytic derivatives
    lap_u: Optional[Callable] = None
    grad_lap_u: Optional[Callable] = None
    diag_hess_u: Optional[Callable] = None
    dirichlet: Optional[Callable] = None
    initial: Optional[Callable] = None

    @property
    def d(self) -> int:
        return self.domain.d

    @property
    def input_dim(self) -> int:
        return self.d + 1 if self.domain.time_dependent else self.d


def poisson_spec(d: int) -> ProblemSpec:
    """``-lap u + pi^2 u = 2 pi^2 sum cos(pi x_k)`` on [0,1]^d, zero Neumann data."""
    if d < 1:
        raise ValueError("d must be >= 1")

    def u(x):
        return np.cos(PI * x).sum(-1)

    def grad_u(x):
        return -PI * np.sin(PI * x)

    def lap_u(x):
        return -PI**2 * np.cos(PI * x).sum(-1)

    def forcing(x):
        return 2 * PI**2 * np.cos(PI * x).sum(-1)

    def residual(x):
        return -lap_u(x) + PI**2 * u(x) - forcing(x)

    def solution_jet(xj: Jet):
        return {"u": (xj * PI).cos().sum(), "p": (xj * PI).sin() * (-PI)}

    return ProblemSpec(ProblemKind.POISSON, Domain("unit", d), forcing, u, grad_u, solution_jet,
                       residual, lap_u=lap_u)


def monge_ampere_spec(d: int) -> ProblemSpec:
    """``det(hess u) = f`` on [-1,1]^d with ``u = exp(|x|^2 / d)`` and its trace as Dirichlet data.

    The Hessian is ``u (2/d) I + u (4/d^2) x x^T``; the determinant lemma gives
    ``f = u^d (2/d)^d (1 + (2/d)|x|^2)``.
    """
    if d < 1:
        raise ValueError("d must be >= 1")

    def u(x):
        return np.exp((x * x).sum(-1) / d)

    def grad_u(x):
        return (2.0 / d) * x * u(x)[:, None]

    def hess_u(x):
        ux = u(x)[:, None, None]
        return ux * ((2.0 / d) * np.eye(d) + (4.0 / d**2) * x[:, :, None] * x[:, None, :])

    def forcing(x):
        r2 = (x * x).sum(-1)
        return (2.0 / d) ** d * np.exp(r2) * (1 + (2.0 / d) * r2)

    def residual(x):
        return np.linalg.det(hess_u(x)) - forcing(x)

    def solution_jet(xj: Jet):
        uj = ((xj * xj).sum() * (1.0 / d)).exp()
        return {"u": uj, "p": xj * uj * (2.0 / d)}

    return ProblemSpec(ProblemKind.MONGE_AMPERE, Domain("symmetric", d), forcing, u, grad_u,
                       solution_jet, residual, dirichlet=u,
                       diag_hess_u=lambda x: np.diagonal(hess_u(x), axis1=1, axis2=2))


def biharmonic_spec(d: int) -> ProblemSpec:
    """``bilap u = (pi^4/16) sum sin(pi x_k / 2)`` on [-1,1]^d, Dirichlet + zero Neumann data."""
    if d < 1:
        raise ValueError("d must be >= 1")
    h = PI / 2

    def u(x):
        return np.sin(h * x).sum(-1)

    def grad_u(x):
        return h * np.cos(h * x)

    def lap_u(x):
        return -h**2 * np.sin(h * x).sum(-1)

    def grad_lap_u(x):
        return -h**3 * np.cos(h * x)

    def forcing(x):
        return PI**4 / 16 * np.sin(h * x).sum(-1)

    def residual(x):
        return h**4 * np.sin(h * x).sum(-1) - forcing(x)

    def solution_jet(xj: Jet):
        s, c = (xj * h).sin(), (xj * h).cos()
        return {"u": s.sum(), "p": c * h, "q": s.sum() * (-h**2), "w": c * (-h**3)}

    return ProblemSpec(ProblemKind.BIHARMONIC, Domain("symmetric", d), forcing, u, grad_u,
                       solution_jet, residual, lap_u=lap_u, grad_lap_u=grad_lap_u, dirichlet=u)


def kdv_spec(d: int, T: float = 1.0) -> ProblemSpec:
    """``u_t + sum_k u_{x_k x_k x_k} = 0`` on [0,T] x [0,2pi]^d, periodic in x.

    Exact solution ``sin(sum x_k + d t)``; points are ``(t, x)``.
    """
    if d < 1 or T <= 0:
        raise ValueError("need d >= 1 and T > 0")

    def phase(z):
        return z[:, 1:].sum(-1) + d * z[:, 0]

    def u(z):
        return np.sin(phase(z))

    def grad_u(z):
        return np.cos(phase(z))[:, None] * np.ones(d)

    def diag_hess_u(z):
        return -np.sin(phase(z))[:, None] * np.ones(d)

    def u_t(z):
        return d * np.cos(phase(z))

    def third_x(z):
        return -np.cos(phase(z))[:, None] * np.ones(d)

    def residual(z):
        return u_t(z) + third_x(z).sum(-1)

    def initial(x):
        return np.sin(x.sum(-1))

    def solution_jet(zj: Jet):
        ph = zj[..., 1:].sum() + zj[..., 0:1] * float(d)
        ones = np.ones(d)
        return {"u": ph.sin(), "p": ph.cos() * ones, "q": ph.sin() * (-ones)}

    return ProblemSpec(ProblemKind.KDV, Domain("torus", d, T), lambda z: np.zeros(len(z)), u,
                       grad_u, solution_jet, residual, diag_hess_u=diag_hess_u, dirichlet=u,
                       initial=initial)


def make_problem(kind, d: int, T: float = 1.0) -> ProblemSpec:
    kind = ProblemKind(kind)
    if kind is ProblemKind.POISSON:
        return poisson_spec(d)
    if kind is ProblemKind.MONGE_AMPERE:
        return monge_ampere_spec(d)
    if kind is ProblemKind.BIHARMONIC:
        return biharmonic_spec(d)
    return kdv_spec(d, T)
