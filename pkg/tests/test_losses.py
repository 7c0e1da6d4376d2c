import math

import numpy as np
import pytest
from scipy import integrate

from conftest import fd_gradient, rel_err
from mimres.autodiff import Jet, Tape
from mimres.losses import (ExactModel, PenaltyWeights, build_model, determinant, dgm_loss,
                           exact_model, leibniz_determinant, loss, mim_loss,
                           neumann_multiplier_wrap)
from mimres.network import ConfigurationError
from mimres.problems import make_problem
from mimres.sampling import Batch, Sampler

PI = math.pi
COMBOS = [(p, m, v) for p in ("poisson", "monge-ampere", "kdv") for m in ("dgm", "mim1", "mim2")
          for v in (None,)] + [("biharmonic", "dgm", None)] + \
    [("biharmonic", m, v) for m in ("mim1", "mim2") for v in ("all", "partial")]


def _batch(problem, n=256, m=128, seed=0):
    return Sampler(problem.domain, seed, n, m, m).batch(0)


# -- exact solutions ------------------------------------------------------------------

@pytest.mark.parametrize("kind,method,variant", COMBOS)
@pytest.mark.parametrize("d", [1, 2, 4])
def test_exact_solution_has_zero_loss(kind, method, variant, d):
    problem = make_problem(kind, d)
    batch = _batch(problem, 4096, 4096)
    value = loss(problem, exact_model(problem, method, variant), batch)
    assert float(value.total) < 1e-8


# -- quadrature and closed-form oracles -------------------------------------------------

class _ZeroP:
    """Exact u with p identically zero."""

    def __init__(self, problem):
        self.problem, self.groups, self.multiplier = problem, ("u", "p"), False

    def fields(self, xj: Jet):
        sol = self.problem.solution_jet(xj)
        return {"u": sol["u"], "p": sol["p"] * 0.0}


def test_zero_p_gives_grad_u_norm():
    problem = make_problem("poisson", 1)
    batch = _batch(problem, 10**4, 16)
    terms = mim_loss(problem, _ZeroP(problem), batch).numeric()
    want = integrate.quad(lambda x: (PI * math.sin(PI * x)) ** 2, 0, 1)[0]
    assert want == pytest.approx(PI**2 / 2)
    assert terms["res:p-grad_u"] == pytest.approx(want, rel=0.05)


def test_zero_network_poisson_matches_quadrature():
    problem = make_problem("poisson", 2)
    model = build_model(problem, "dgm", None, 2, 5, "square", np.random.default_rng(0))
    model = model.with_params([np.zeros_like(p) for p in model.params])
    batch = _batch(problem, 10**4, 64)
    terms = dgm_loss(problem, model, batch).numeric()
    want = integrate.dblquad(lambda y, x: problem.forcing(np.array([[x, y]]))[0] ** 2,
                             0, 1, 0, 1)[0]
    assert terms["res:pde"] == pytest.approx(want, rel=0.05)
    assert terms["neumann"] == 0.0


def test_penalty_weights_are_linear(rng):
    problem = make_problem("poisson", 2)
    model = build_model(problem, "dgm", None, 1, 4, "square", rng)
    batch = _batch(problem)
    a = dgm_loss(problem, model, batch, PenaltyWeights(1.0))
    b = dgm_loss(problem, model, batch, PenaltyWeights(2.0))
    assert a.numeric() == b.numeric()
    diff = float(b.total) - float(a.total)
    assert diff == pytest.approx(a.numeric()["neumann"], rel=1e-12)


def test_loss_is_permutation_invariant(rng):
    problem = make_problem("biharmonic", 2)
    model = build_model(problem, "mim1", "all", 1, 4, "square", rng)
    batch = _batch(problem)
    pi, pb = rng.permutation(len(batch.interior)), rng.permutation(len(batch.boundary))
    shuffled = Batch(batch.interior[pi], batch.boundary[pb], batch.normals[pb], None, batch.domain)
    assert float(loss(problem, model, batch).total) == pytest.approx(
        float(loss(problem, model, shuffled).total), rel=1e-12)


# -- Neumann multiplier ----------------------------------------------------------------

def test_multiplier_examples():
    x = np.array([[0.0, 0.3, 0.5], [1.0, 0.5, 0.2]])
    p = neumann_multiplier_wrap(np.full((2, 3), 7.0), x)
    assert p[0, 0] == 0.0 and p[1, 0] == 0.0
    assert neumann_multiplier_wrap(np.ones(3), np.full(3, 0.5)).tolist() == [0.25] * 3
    grid = np.linspace(0, 1, 1001)
    vals = neumann_multiplier_wrap(np.ones_like(grid), grid)
    assert grid[np.argmax(vals)] == 0.5 and vals.max() == 0.25


def test_multiplier_model_has_no_boundary_term(rng):
    problem = make_problem("poisson", 3)
    model = build_model(problem, "mim2", None, 2, 5, "square", rng)
    assert model.multiplier
    value = mim_loss(problem, model, _batch(problem))
    assert "neumann" not in value.terms
    plain = build_model(problem, "mim2", None, 2, 5, "square", rng, multiplier=False)
    assert "neumann" in mim_loss(problem, plain, _batch(problem)).terms


# -- determinant ---------------------------------------------------------------------------

def test_determinant_examples(rng):
    assert float(determinant(np.eye(3))) == 1.0
    assert float(determinant(np.array([[2.0, 1.0], [1.0, 2.0]]))) == 3.0
    for d in range(1, 9):
        a = rng.normal(size=(20, d, d))
        assert np.allclose(determinant(a), np.linalg.det(a), rtol=1e-10, atol=1e-12)
    with pytest.raises(ConfigurationError):
        determinant(np.eye(9))


def test_determinant_matches_permutation_sum(rng):
    for d in (1, 2, 3, 4):
        a = rng.normal(size=(200, d, d))
        assert np.max(np.abs(determinant(a) - leibniz_determinant(a))) < 1e-12
    a = rng.normal(size=(5, 5, 5))
    assert np.allclose(determinant(a), leibniz_determinant(a), rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("d", [3, 6])
def test_determinant_gradient_is_adjugate(d, rng):
    a = rng.normal(size=(d, d))
    t = Tape()
    v = t.bind(a.ravel())
    g = t.backward(determinant(v.reshape(d, d)).sum()).flat.reshape(d, d)
    adj_t = np.linalg.det(a) * np.linalg.inv(a).T
    assert np.allclose(g, adj_t, rtol=1e-9, atol=1e-10)


# -- parameter gradients ---------------------------------------------------------------------

@pytest.mark.parametrize("kind,method,variant", COMBOS)
def test_loss_gradient_vs_finite_differences(kind, method, variant):
    problem = make_problem(kind, 2)
    model = build_model(problem, method, variant, 1, 4, "square", np.random.default_rng(7))
    batch = _batch(problem, 32, 16, seed=1)
    sizes = [p.size for p in model.params]

    def value(theta):
        parts = np.split(theta, np.cumsum(sizes)[:-1])
        return float(loss(problem, model.with_params(parts), batch).total)

    theta = np.concatenate(model.params) * 0.5
    tape = Tape()
    parts = np.split(theta, np.cumsum(sizes)[:-1])
    bound = model.with_params(parts).bind(tape)
    g = tape.backward(loss(problem, bound, batch).total).flat
    assert rel_err(g, fd_gradient(value, theta)) < 1e-4


# -- structure ---------------------------------------------------------------------------------

def test_biharmonic_variant_terms(rng):
    problem = make_problem("biharmonic", 2)
    batch = _batch(problem)
    full = mim_loss(problem, build_model(problem, "mim2", "all", 1, 4, "square", rng), batch)
    assert len(full.residual_terms) == 4 and sorted(full.penalty_terms) == ["dirichlet", "neumann"]
    part = mim_loss(problem, build_model(problem, "mim1", "partial", 1, 4, "square", rng), batch)
    assert len(part.residual_terms) == 2 and sorted(part.penalty_terms) == ["dirichlet", "neumann"]
    assert float(full.total) == pytest.approx(sum(full.numeric().values()))


def test_missing_group_is_rejected():
    problem = make_problem("monge-ampere", 2)
    with pytest.raises(ConfigurationError):
        mim_loss(problem, ExactModel(problem, ("u",)), _batch(problem))


def test_kdv_loss_terms(rng):
    problem = make_problem("kdv", 2)
    batch = _batch(problem)
    dgm = loss(problem, build_model(problem, "dgm", None, 1, 4, "square", rng), batch)
    assert set(dgm.penalty_terms) == {"dirichlet", "initial", "periodic_u", "periodic_grad_u"}
    mim = loss(problem, build_model(problem, "mim1", None, 1, 4, "square", rng), batch)
    assert set(mim.penalty_terms) == {"dirichlet", "initial", "periodic_u", "periodic_p"}
    assert len(mim.residual_terms) == 3
