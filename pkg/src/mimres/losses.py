"""Training losses: least-squares PDE residuals (DGM) and first-order system residuals (MIM).

Every term is a Monte Carlo estimate ``measure * mean(|r|^2)`` over its point
set.  A loss is returned as a :class:`LossValue` that keeps each term apart so
callers can inspect the decomposition; ``total`` is ``sum(weight * term)``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .autodiff import tape as _t
from .autodiff.derivatives import bilaplacian, coefficient, hessian, seed_jet
from .autodiff.jet import ActivationKind, Jet
from .network import (ConfigurationError, MethodKind, NetworkEval, ProblemKind,
                      VariantKind, groups, init_params, network_specs)
from .problems import ProblemSpec
from .sampling import Batch, periodic_partner

MAX_DET_DIM = 8


@dataclass
class PenaltyWeights:
    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 1.0

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ValueError("penalty weights must be nonnegative")


@dataclass
class LossValue:
    terms: dict  # name -> scalar (Var or float)
    weights: dict  # name -> float
    meta: dict = field(default_factory=dict)

    @property
    def total(self):
        return _t.sum_all([self.terms[k] * self.weights[k] for k in self.terms])

    @property
    def residual_terms(self) -> list[str]:
        return [k for k in self.terms if k.startswith("res:")]

    @property
    def penalty_terms(self) -> list[str]:
        return [k for k in self.terms if not k.startswith("res:")]

    def numeric(self) -> dict:
        return {k: float(np.asarray(_t.value_of(v)).ravel()[0]) for k, v in self.terms.items()}


# -- models -----------------------------------------------------------------------

def neumann_multiplier_wrap(raw_p, x):
    """``p_i = x_i (1 - x_i) raw_p_i``; works on jets and on plain arrays."""
    return raw_p * (x * (1.0 - x))


class Model:
    """The networks of one method, exposing the unknown groups ``u, p, q, w``."""

    def __init__(self, problem: ProblemSpec, method, variant, nets, multiplier=False):
        self.problem = problem
        self.method = MethodKind(method)
        self.variant = None if variant is None else VariantKind(variant)
        self.nets = list(nets)  # [(group names, NetworkEval)]
        self.multiplier = multiplier
        widths = dict(groups(problem.kind, self.variant, problem.d))
        widths["u"] = 1
        self._slices = []
        for names, _ in self.nets:
            pos, sl = 0, {}
            for g in names:
                sl[g] = slice(pos, pos + widths[g])
                pos += widths[g]
            self._slices.append(sl)

    @property
    def groups(self) -> tuple[str, ...]:
        return tuple(g for names, _ in self.nets for g in names)

    @property
    def params(self) -> list:
        return [net.params for _, net in self.nets]

    def with_params(self, params) -> "Model":
        nets = [(names, NetworkEval(net.spec, p)) for (names, net), p in zip(self.nets, params)]
        return Model(self.problem, self.method, self.variant, nets, self.multiplier)

    def bind(self, tape: _t.Tape) -> "Model":
        return Model(self.problem, self.method, self.variant,
                     [(names, net.bind(tape)) for names, net in self.nets], self.multiplier)

    def fields(self, xj: Jet) -> dict:
        out = {}
        for (names, net), sl in zip(self.nets, self._slices):
            y = net(xj)
            for g in names:
                out[g] = y[..., sl[g]]
        if self.multiplier and "p" in out:
            out["p"] = neumann_multiplier_wrap(out["p"], xj)
        return out


class ExactModel:
    """Analytic unknowns of a problem, in the same interface as :class:`Model`."""

    def __init__(self, problem: ProblemSpec, names=("u", "p", "q", "w")):
        self.problem = problem
        self.names = tuple(names)
        self.multiplier = False

    @property
    def groups(self):
        return self.names

    def fields(self, xj: Jet) -> dict:
        sol = self.problem.solution_jet(xj)
        return {g: sol[g] for g in self.names if g in sol}


def build_model(problem: ProblemSpec, method, variant, depth, width, activation, rng,
                multiplier: bool | None = None) -> Model:
    """Fresh networks with initialized parameters; ``rng`` is consumed in network order."""
    method = MethodKind(method)
    if problem.kind is not ProblemKind.BIHARMONIC and variant is not None \
            and VariantKind(variant) is VariantKind.PARTIAL:
        raise ConfigurationError("variant 'partial' only applies to the biharmonic problem")
    if problem.kind is ProblemKind.BIHARMONIC and method is not MethodKind.DGM and variant is None:
        variant = VariantKind.ALL
    if multiplier is None:
        multiplier = problem.kind is ProblemKind.POISSON and method is not MethodKind.DGM
    nets = []
    for names, spec in network_specs(method, problem.kind, variant, depth, width, problem.d,
                                     activation):
        nets.append((names, NetworkEval(spec, init_params(spec, rng))))
    return Model(problem, method, variant, nets, multiplier)


def exact_model(problem: ProblemSpec, method, variant=None) -> ExactModel:
    if MethodKind(method) is MethodKind.DGM:
        return ExactModel(problem, ("u",))
    return ExactModel(problem, tuple(g for g, _ in groups(problem.kind, variant, problem.d)))


# -- helpers ----------------------------------------------------------------------

def _msq(r, measure: float):
    """``measure * mean_b sum_k r[b, k]^2`` for ``r`` of shape (B,) or (B, k)."""
    n = np.shape(_t.value_of(r))[0]
    return (r * r).sum() * (measure / n)


def _probe(model, pts, dirs, order):
    return model.fields(seed_jet(pts, dirs, order))


def _val(jet: Jet):
    return jet.value[:, 0, :]


def _d1(jet: Jet):
    return coefficient(jet, 1)


def _diag(c, offset=0):
    """``c[:, offset + k, k]`` summed-out via a mask, for (B, D, k) coefficients."""
    k = np.shape(_t.value_of(c))[-1]
    return (c[:, offset:offset + k, :] * np.eye(k)).sum(axis=2, keepdims=False)


def _dot_normal(v, normals):
    return (v * normals).sum(axis=1, keepdims=False)


# -- determinant ------------------------------------------------------------------

def determinant(a):
    """Determinant of a ``(..., d, d)`` stack, tape-differentiable.

    Cofactor expansion for ``d <= 4``; Bird's division-free iteration for ``5 <= d <= 8``.
    """
    d = np.shape(_t.value_of(a))[-1]
    if d > MAX_DET_DIM:
        raise ConfigurationError(f"determinant supports d <= {MAX_DET_DIM}, got {d}")
    if d <= 4:
        entries = [[a[..., i, j] for j in range(d)] for i in range(d)]
        memo = {}

        def minor(row, cols):
            if len(cols) == 1:
                return entries[row][cols[0]]
            if cols in memo:
                return memo[cols]
            acc = None
            for pos, c in enumerate(cols):
                term = entries[row][c] * minor(row + 1, cols[:pos] + cols[pos + 1:])
                acc = term if acc is None else (acc - term if pos % 2 else acc + term)
            memo[cols] = acc
            return acc

        return minor(0, tuple(range(d)))
    return _bird(a, d)


def _bird(a, d):
    upper = np.triu(np.ones((d, d)), k=1)
    eye = np.eye(d)
    below = np.tril(np.ones((d, d)), k=-1)  # below[j, i] = 1 if j > i
    x = a
    lead = np.shape(_t.value_of(a))[:-2]
    for _ in range(d - 1):
        diag = (x * eye).sum(axis=-1)  # (..., d)
        mu_diag = -(diag @ below)  # mu_ii = -sum_{j>i} x_jj
        mu = x * upper + mu_diag.reshape(*lead, d, 1) * eye
        x = mu @ a
    sign = -1.0 if d % 2 == 0 else 1.0
    return x[..., 0, 0] * sign


def leibniz_determinant(a: np.ndarray) -> np.ndarray:
    """Brute-force permutation sum; reference for small matrices."""
    a = np.asarray(a, dtype=float)
    d = a.shape[-1]
    total = np.zeros(a.shape[:-2])
    for perm in itertools.permutations(range(d)):
        inv = sum(1 for i in range(d) for j in range(i + 1, d) if perm[i] > perm[j])
        term = np.ones(a.shape[:-2])
        for i, p in enumerate(perm):
            term = term * a[..., i, p]
        total = total + (-1.0) ** inv * term
    return total


# -- losses -----------------------------------------------------------------------

def _require(model, names):
    missing = [g for g in names if g not in model.groups]
    if missing:
        raise ConfigurationError(f"model lacks unknown group(s) {missing}")


def dgm_loss(problem: ProblemSpec, model, batch: Batch, weights: PenaltyWeights | None = None,
             ) -> LossValue:
    weights = weights or PenaltyWeights()
    _require(model, ("u",))
    kind, d = problem.kind, problem.d
    xi, xb, nb = batch.interior, batch.boundary, batch.normals
    vol, area = batch.interior_measure, batch.boundary_measure
    terms, w, meta = {}, {}, {}

    def u_of(j):
        return model.fields(j)["u"]

    if kind is ProblemKind.POISSON:
        f = _probe(model, xi, np.eye(d), 2)["u"]
        lap = coefficient(f, 2).sum(axis=1) * 2.0
        r = -lap[:, 0] + _val(f)[:, 0] * np.pi**2 - problem.forcing(xi)
        terms["res:pde"], w["res:pde"] = _msq(r, vol), 1.0
        g = _probe(model, xb, np.eye(d), 1)["u"]
        terms["neumann"], w["neumann"] = _msq(_dot_normal(_d1(g)[:, :, 0], nb), area), weights.lambda1
        meta["neumann_form"] = "du/dn"
    elif kind is ProblemKind.MONGE_AMPERE:
        hess = hessian(u_of, xi)[:, 0]
        terms["res:pde"], w["res:pde"] = _msq(determinant(hess) - problem.forcing(xi), vol), 1.0
        ub = _probe(model, xb, np.eye(d), 0)["u"]
        terms["dirichlet"], w["dirichlet"] = (
            _msq(_val(ub)[:, 0] - problem.dirichlet(xb), area), weights.lambda1)
    elif kind is ProblemKind.BIHARMONIC:
        bl = bilaplacian(u_of, xi)[:, 0]
        terms["res:pde"], w["res:pde"] = _msq(bl - problem.forcing(xi), vol), 1.0
        g = _probe(model, xb, np.eye(d), 1)["u"]
        terms["dirichlet"], w["dirichlet"] = (
            _msq(_val(g)[:, 0] - problem.dirichlet(xb), area), weights.lambda1)
        terms["neumann"], w["neumann"] = (
            _msq(_dot_normal(_d1(g)[:, :, 0], nb), area), weights.lambda2)
        meta["neumann_form"] = "du/dn"
    else:
        dirs = np.eye(d + 1)
        f = _probe(model, xi, dirs, 3)["u"]
        u_t = coefficient(f, 1)[:, 0, 0]
        uxxx = (coefficient(f, 3)[:, 1:, 0] * 6.0).sum(axis=1)
        terms["res:pde"], w["res:pde"] = _msq(u_t + uxxx - problem.forcing(xi), vol), 1.0
        _kdv_penalties(problem, model, batch, weights, terms, w, use_p=False)
    return LossValue(terms, w, meta)


def _kdv_penalties(problem, model, batch, weights, terms, w, use_p):
    d = problem.d
    xb, x0, xi = batch.boundary, batch.initial, batch.interior
    ub = _probe(model, xb, np.eye(d + 1)[:1], 0)["u"]
    terms["dirichlet"], w["dirichlet"] = (
        _msq(_val(ub)[:, 0] - problem.dirichlet(xb), batch.boundary_measure), weights.lambda1)
    u0 = _probe(model, x0, np.eye(d + 1)[:1], 0)["u"]
    terms["initial"], w["initial"] = (
        _msq(_val(u0)[:, 0] - problem.initial(x0[:, 1:]), batch.initial_measure), weights.lambda1)
    # one translated partner per spatial axis, stacked after the base points
    n = len(xi)
    stacked = np.vstack([xi] + [periodic_partner(problem.domain, xi, k) for k in range(d)])
    spatial = np.eye(d + 1)[1:]
    fields = _probe(model, stacked, spatial, 0 if use_p else 1)
    u = _val(fields["u"])[:, 0]
    grad = _val(fields["p"]) if use_p else _d1(fields["u"])[:, :, 0]
    du = [u[:n] - u[(k + 1) * n:(k + 2) * n] for k in range(d)]
    dg = [grad[:n] - grad[(k + 1) * n:(k + 2) * n] for k in range(d)]
    vol = batch.interior_measure
    terms["periodic_u"], w["periodic_u"] = _t.sum_all([_msq(r, vol) for r in du]), weights.lambda2
    name = "periodic_p" if use_p else "periodic_grad_u"
    terms[name], w[name] = _t.sum_all([_msq(r, vol) for r in dg]), weights.lambda3


def mim_loss(problem: ProblemSpec, model, batch: Batch, weights: PenaltyWeights | None = None,
             variant=None) -> LossValue:
    weights = weights or PenaltyWeights()
    kind, d = problem.kind, problem.d
    if variant is None:
        variant = getattr(model, "variant", None)
    if variant is None:
        partial = kind is ProblemKind.BIHARMONIC and "p" not in model.groups
        variant = VariantKind.PARTIAL if partial else VariantKind.ALL
    variant = VariantKind(variant)
    xi, xb, nb = batch.interior, batch.boundary, batch.normals
    vol, area = batch.interior_measure, batch.boundary_measure
    terms, w, meta = {}, {}, {}
    if kind is ProblemKind.BIHARMONIC and variant is VariantKind.PARTIAL:
        _require(model, ("u", "q"))
        fl = _probe(model, xi, np.eye(d), 2)
        u, q = fl["u"], fl["q"]
        lap_u = coefficient(u, 2).sum(axis=1)[:, 0] * 2.0
        lap_q = coefficient(q, 2).sum(axis=1)[:, 0] * 2.0
        terms["res:q-lap_u"], w["res:q-lap_u"] = _msq(_val(q)[:, 0] - lap_u, vol), 1.0
        terms["res:lap_q-f"], w["res:lap_q-f"] = _msq(lap_q - problem.forcing(xi), vol), 1.0
        g = _probe(model, xb, np.eye(d), 1)["u"]
        terms["dirichlet"], w["dirichlet"] = (
            _msq(_val(g)[:, 0] - problem.dirichlet(xb), area), weights.lambda1)
        terms["neumann"], w["neumann"] = (
            _msq(_dot_normal(_d1(g)[:, :, 0], nb), area), weights.lambda2)
        meta["neumann_form"] = "du/dn"
        return LossValue(terms, w, meta)

    if kind is ProblemKind.KDV:
        _require(model, ("u", "p", "q"))
        fl = _probe(model, xi, np.eye(d + 1), 1)
        u, p, q = fl["u"], fl["p"], fl["q"]
        grad_u = _d1(u)[:, 1:, 0]
        terms["res:p-grad_u"], w["res:p-grad_u"] = _msq(_val(p) - grad_u, vol), 1.0
        terms["res:q-diag_grad_p"], w["res:q-diag_grad_p"] = (
            _msq(_val(q) - _diag(_d1(p), 1), vol), 1.0)
        r = _d1(u)[:, 0, 0] + _diag(_d1(q), 1).sum(axis=1) - problem.forcing(xi)
        terms["res:u_t+div_q"], w["res:u_t+div_q"] = _msq(r, vol), 1.0
        _kdv_penalties(problem, model, batch, weights, terms, w, use_p=True)
        return LossValue(terms, w, meta)

    _require(model, ("u", "p"))
    fl = _probe(model, xi, np.eye(d), 1)
    u, p = fl["u"], fl["p"]
    terms["res:p-grad_u"], w["res:p-grad_u"] = _msq(_val(p) - _d1(u)[:, :, 0], vol), 1.0
    div_p = _diag(_d1(p))
    if kind is ProblemKind.POISSON:
        r = -div_p.sum(axis=1) + _val(u)[:, 0] * np.pi**2 - problem.forcing(xi)
        terms["res:pde"], w["res:pde"] = _msq(r, vol), 1.0
        if not model.multiplier:
            pb = _probe(model, xb, np.eye(d), 0)["p"]
            terms["neumann"], w["neumann"] = _msq(_dot_normal(_val(pb), nb), area), weights.lambda1
            meta["neumann_form"] = "p.n"
        else:
            meta["neumann_form"] = "exact (multiplier)"
    elif kind is ProblemKind.MONGE_AMPERE:
        jac = _d1(p)  # jac[b, j, i] = d p_i / d x_j; det is transpose invariant
        terms["res:det-f"], w["res:det-f"] = _msq(determinant(jac) - problem.forcing(xi), vol), 1.0
        ub = _probe(model, xb, np.eye(d), 0)["u"]
        terms["dirichlet"], w["dirichlet"] = (
            _msq(_val(ub)[:, 0] - problem.dirichlet(xb), area), weights.lambda1)
    else:
        _require(model, ("q", "w"))
        q, wv = fl["q"], fl["w"]
        terms["res:q-div_p"], w["res:q-div_p"] = _msq(_val(q)[:, 0] - div_p.sum(axis=1), vol), 1.0
        terms["res:w-grad_q"], w["res:w-grad_q"] = _msq(_val(wv) - _d1(q)[:, :, 0], vol), 1.0
        r = _diag(_d1(wv)).sum(axis=1) - problem.forcing(xi)
        terms["res:div_w-f"], w["res:div_w-f"] = _msq(r, vol), 1.0
        fb = _probe(model, xb, np.eye(d), 0)
        terms["dirichlet"], w["dirichlet"] = (
            _msq(_val(fb["u"])[:, 0] - problem.dirichlet(xb), area), weights.lambda1)
        terms["neumann"], w["neumann"] = (
            _msq(_dot_normal(_val(fb["p"]), nb), area), weights.lambda2)
        meta["neumann_form"] = "p.n"
    return LossValue(terms, w, meta)


def activation_warnings(problem: ProblemSpec, method, activation, variant=None) -> list[str]:
    """Configurations that are allowed but cannot fit the highest derivatives in the loss."""
    method, act = MethodKind(method), ActivationKind(activation)
    need = 1
    if method is MethodKind.DGM:
        need = {ProblemKind.POISSON: 2, ProblemKind.MONGE_AMPERE: 2,
                ProblemKind.BIHARMONIC: 4, ProblemKind.KDV: 3}[problem.kind]
    elif problem.kind is ProblemKind.BIHARMONIC and variant is not None \
            and VariantKind(variant) is VariantKind.PARTIAL:
        need = 2  # the partial variant takes Laplacians of u and q
    # a piecewise polynomial of degree p per layer; ReLU nets are piecewise linear
    if act is ActivationKind.RELU and need >= 2:
        return [f"ReLU networks have zero derivatives of order >= 2 almost everywhere; "
                f"the {problem.kind.value} {method.value} loss uses order {need}"]
    return []


def loss(problem: ProblemSpec, model, batch: Batch, weights: PenaltyWeights | None = None,
         ) -> LossValue:
    if model_method(model) is MethodKind.DGM:
        return dgm_loss(problem, model, batch, weights)
    return mim_loss(problem, model, batch, weights)


def model_method(model) -> MethodKind:
    if isinstance(model, Model):
        return model.method
    return MethodKind.DGM if tuple(model.groups) == ("u",) else MethodKind.MIM1
