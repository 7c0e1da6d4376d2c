"""Relative L2 errors of the solution and its derivatives on a fixed evaluation set."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff.derivatives import coefficient, grad_laplacian, seed_jet
from .network import ProblemKind
from .problems import ProblemSpec
from .sampling import sample_interior, stream

QUANTITIES = ("u", "grad_u", "lap_u", "grad_lap_u", "diag_hess_u")

PROBLEM_QUANTITIES = {
    ProblemKind.POISSON: ("u", "grad_u"),
    ProblemKind.MONGE_AMPERE: ("u", "grad_u"),
    ProblemKind.BIHARMONIC: ("u", "grad_u", "lap_u", "grad_lap_u"),
    ProblemKind.KDV: ("u", "grad_u", "diag_hess_u"),
}


class DegenerateFieldError(ValueError):
    pass


def relative_l2(approx, exact) -> float:
    """``sqrt(sum |approx - exact|^2 / sum |exact|^2)`` over the sample axis."""
    approx, exact = np.asarray(approx, dtype=float), np.asarray(exact, dtype=float)
    den = float(np.sum(exact * exact))
    if den == 0.0:
        raise DegenerateFieldError("exact field has zero norm on the evaluation set")
    diff = approx - exact
    return float(np.sqrt(np.sum(diff * diff) / den))


@dataclass
class EvalSet:
    points: np.ndarray
    exact: dict

    @classmethod
    def draw(cls, problem: ProblemSpec, n: int, seed: int) -> "EvalSet":
        pts = sample_interior(problem.domain, n, stream(seed, "eval"))
        return cls.at(problem, pts)

    @classmethod
    def at(cls, problem: ProblemSpec, pts: np.ndarray) -> "EvalSet":
        exact = {}
        for q in PROBLEM_QUANTITIES[problem.kind]:
            fn = problem.u if q == "u" else getattr(problem, q)
            exact[q] = fn(pts)
        return cls(pts, exact)


def predict(problem: ProblemSpec, model, pts: np.ndarray) -> tuple[dict, dict]:
    """Model predictions of each problem quantity, plus notes on how each was obtained.

    Quantities carried by an auxiliary output (p, q, w) are read off it; the
    rest come from jet derivatives of the relevant network output.
    """
    d = problem.d
    kind = problem.kind
    have = set(model.groups)
    wanted = PROBLEM_QUANTITIES[kind]
    time = kind is ProblemKind.KDV
    spatial = np.eye(d + 1)[1:] if time else np.eye(d)
    out, notes = {}, {}

    order = 1
    if "lap_u" in wanted and "q" not in have:
        order = 2
    if "diag_hess_u" in wanted and "q" not in have:
        order = 2
    fl = model.fields(seed_jet(pts, spatial, order))
    u = fl["u"]
    out["u"] = u.value[:, 0, 0]
    if "p" in have:
        out["grad_u"] = np.asarray(fl["p"].value[:, 0, :])
        notes["grad_u"] = "p"
    else:
        out["grad_u"] = np.asarray(coefficient(u, 1))[:, :, 0]
        notes["grad_u"] = "jet(u)"
    if "lap_u" in wanted:
        if "q" in have:
            out["lap_u"] = fl["q"].value[:, 0, 0]
            notes["lap_u"] = "q"
        else:
            out["lap_u"] = 2.0 * np.asarray(coefficient(u, 2)).sum(axis=1)[:, 0]
            notes["lap_u"] = "jet(u)"
    if "grad_lap_u" in wanted:
        if "w" in have:
            out["grad_lap_u"] = fl["w"].value[:, 0, :]
            notes["grad_lap_u"] = "w"
        elif "q" in have:
            out["grad_lap_u"] = np.asarray(coefficient(fl["q"], 1))[:, :, 0]
            notes["grad_lap_u"] = "jet(q)"
        else:
            out["grad_lap_u"] = np.asarray(
                grad_laplacian(lambda j: model.fields(j)["u"], pts))[:, :, 0]
            notes["grad_lap_u"] = "jet(u)"
    if "diag_hess_u" in wanted:
        if "q" in have:
            out["diag_hess_u"] = fl["q"].value[:, 0, :]
            notes["diag_hess_u"] = "q"
        else:
            out["diag_hess_u"] = 2.0 * np.asarray(coefficient(u, 2))[:, :, 0]
            notes["diag_hess_u"] = "jet(u)"
    return {k: np.broadcast_to(v, np.shape(v)) for k, v in out.items()}, notes


def evaluate_all(problem: ProblemSpec, model, eval_set: EvalSet, chunk: int = 1024) -> dict:
    """Relative L2 error of every quantity the problem defines."""
    preds: dict = {}
    for start in range(0, len(eval_set.points), chunk):
        p, _ = predict(problem, model, eval_set.points[start:start + chunk])
        for k, v in p.items():
            preds.setdefault(k, []).append(np.asarray(v))
    return {k: relative_l2(np.concatenate(preds[k]), eval_set.exact[k]) for k in eval_set.exact}


def sources(problem: ProblemSpec, model) -> dict:
    """Which output or derivative each metric is computed from."""
    _, notes = predict(problem, model, EvalSet.draw(problem, 2, 0).points)
    notes["u"] = "u"
    return notes
