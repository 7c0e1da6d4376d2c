"""Taylor jets composed with a reverse-mode tape."""

from .derivatives import (
    DerivativeOrderError,
    bilaplacian,
    directional_derivs,
    grad_laplacian,
    gradient,
    hessian,
    laplacian,
    seed_jet,
    seed_jet2,
    third_derivatives,
)
from .jet import ActivationKind, Jet, Jet1, Jet2, JetShapeError, activation, jet_activation, jet_add, jet_mul
from .tape import Adjoint, BindingError, Tape, TapeError, Var, backward, concatenate, value_of

__all__ = [
    "ActivationKind", "Adjoint", "BindingError", "DerivativeOrderError", "Jet", "Jet1", "Jet2",
    "JetShapeError", "Tape", "TapeError", "Var", "activation", "backward", "bilaplacian",
    "concatenate", "directional_derivs", "grad_laplacian", "gradient", "hessian", "jet_activation",
    "jet_add", "jet_mul", "laplacian", "seed_jet", "seed_jet2", "third_derivatives", "value_of",
]
