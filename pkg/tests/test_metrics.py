import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mimres.autodiff.derivatives import coefficient
from mimres.losses import build_model, exact_model
from mimres.metrics import (PROBLEM_QUANTITIES, DegenerateFieldError, EvalSet, evaluate_all,
                            predict, relative_l2, sources)
from mimres.problems import make_problem


def test_relative_l2_examples(rng):
    e = rng.normal(size=(100, 3))
    assert relative_l2(e, e) == 0.0
    assert relative_l2(1.1 * e, e) == pytest.approx(0.1, rel=1e-14)
    with pytest.raises(DegenerateFieldError):
        relative_l2(e, np.zeros_like(e))


def test_relative_l2_constant_offset():
    # u = cos(pi x) on [0,1]: int u^2 = 1/2, so a constant offset c gives |c| sqrt(2)
    x = np.random.default_rng(0).uniform(size=10**5)
    u = np.cos(np.pi * x)
    c = 0.05
    assert relative_l2(u + c, u) == pytest.approx(c * np.sqrt(2.0), rel=0.01)


@given(st.floats(-1e3, 1e3).filter(lambda s: abs(s) > 1e-3), st.integers(0, 100))
def test_scale_equivariance(s, seed):
    r = np.random.default_rng(seed)
    a, e = r.normal(size=50), r.normal(size=50)
    assert relative_l2(s * a, s * e) == pytest.approx(relative_l2(a, e), rel=1e-14, abs=1e-14)


@pytest.mark.parametrize("kind", ["poisson", "monge-ampere", "biharmonic", "kdv"])
@pytest.mark.parametrize("method,variant", [("dgm", None), ("mim1", None), ("mim2", "partial")])
def test_exact_injection_gives_zero_error(kind, method, variant):
    if variant and kind != "biharmonic":
        variant = None
    problem = make_problem(kind, 2)
    es = EvalSet.draw(problem, 500, 0)
    errs = evaluate_all(problem, exact_model(problem, method, variant), es)
    assert set(errs) == set(PROBLEM_QUANTITIES[problem.kind])
    assert max(errs.values()) < 1e-12


def test_zero_network_error_is_one():
    problem = make_problem("poisson", 2)
    model = build_model(problem, "dgm", None, 2, 5, "square", np.random.default_rng(0))
    model = model.with_params([np.zeros_like(p) for p in model.params])
    assert evaluate_all(problem, model, EvalSet.draw(problem, 10**4, 0))["u"] == pytest.approx(1.0)


class _Hardwired:
    """MIM-shaped model whose p is the jet gradient of a network u."""

    def __init__(self, inner):
        self.inner, self.groups, self.multiplier = inner, ("u", "p"), False

    def fields(self, xj):
        u = self.inner.fields(xj)["u"]
        grad = coefficient(u, 1)[:, :, 0]
        from mimres.autodiff import Jet
        p = Jet(xj.orders, {k: (grad[:, None, :] if k == (0,) else None) for k in xj.coeffs})
        return {"u": u, "p": p}


def test_dgm_and_mim_grad_metrics_agree():
    problem = make_problem("poisson", 2)
    dgm = build_model(problem, "dgm", None, 2, 5, "square", np.random.default_rng(1))
    es = EvalSet.draw(problem, 300, 2)
    a = evaluate_all(problem, dgm, es)["grad_u"]
    b = evaluate_all(problem, _Hardwired(dgm), es, chunk=1)["grad_u"]
    assert a == pytest.approx(b, abs=1e-12)


def test_partial_variant_sources():
    problem = make_problem("biharmonic", 2)
    model = build_model(problem, "mim2", "partial", 1, 4, "square", np.random.default_rng(0))
    src = sources(problem, model)
    assert src["lap_u"] == "q" and src["grad_lap_u"] == "jet(q)" and src["grad_u"] == "jet(u)"
    full = build_model(problem, "mim1", "all", 1, 4, "square", np.random.default_rng(0))
    assert sources(problem, full)["grad_lap_u"] == "w"


def test_metrics_do_not_touch_parameters():
    problem = make_problem("kdv", 1)
    model = build_model(problem, "dgm", None, 1, 4, "recu", np.random.default_rng(0))
    before = [p.copy() for p in model.params]
    es = EvalSet.draw(problem, 100, 0)
    evaluate_all(problem, model, es)
    predict(problem, model, es.points)
    assert all(np.array_equal(a, b) for a, b in zip(before, model.params))
    assert np.array_equal(es.points, EvalSet.draw(problem, 100, 0).points)
