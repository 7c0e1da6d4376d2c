"""Adam training loop with per-iteration resampling and periodic metric evaluation."""

from __future__ import annotations

import dataclasses
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .autodiff.tape import Tape
from .losses import PenaltyWeights, activation_warnings, build_model, loss
from .metrics import EvalSet, evaluate_all
from .network import (ActivationKind, ConfigurationError, MethodKind, ProblemKind, VariantKind,
                      save_params)
from .problems import make_problem
from .sampling import Sampler, stream

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, message, records=None):
        super().__init__(message)
        self.records = records or []


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, size: int, lr: float = 1e-3, **kw) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), 0, lr, **kw)


def adam_step(state: AdamState, params: np.ndarray, grad: np.ndarray, loss_value=float("nan"),
              ) -> np.ndarray:
    """One bias-corrected Adam update; moments are updated in place, new params returned."""
    grad = np.asarray(grad, dtype=float)
    if grad.shape != params.shape:
        raise ValueError(f"gradient length {grad.shape} != parameter length {params.shape}")
    if not np.all(np.isfinite(grad)):
        bad = np.abs(grad[np.isfinite(grad)])
        raise TrainingDiverged(f"non-finite gradient at iteration {state.t}: loss={loss_value}, "
                               f"max finite |g|={bad.max() if bad.size else float('nan')}")
    state.t += 1
    state.m *= state.beta1
    state.m += (1 - state.beta1) * grad
    state.v *= state.beta2
    state.v += (1 - state.beta2) * grad * grad
    m_hat = state.m / (1 - state.beta1**state.t)
    v_hat = state.v / (1 - state.beta2**state.t)
    return params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


@dataclass
class RunConfig:
    problem: str = "poisson"
    method: str = "mim1"
    variant: Optional[str] = None
    dim: int = 2
    time_horizon: float = 1.0
    depth: int = 2
    width: int = 10
    activation: str = "square"
    iters: int = 20000
    lr: float = 1e-3
    batch_interior: int = 1024
    batch_boundary: int = 256
    batch_initial: int = 256
    eval_points: int = 10000
    cadence: int = 100
    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 1.0
    seed: int = 0
    out: Optional[str] = None
    checkpoint_every: int = 0
    window: int = 10
    neumann_multiplier: bool = True
    timing: bool = False

    def validate(self) -> "RunConfig":
        ProblemKind(self.problem)
        MethodKind(self.method)
        ActivationKind(self.activation)
        if self.variant is not None:
            VariantKind(self.variant)
            if self.problem != ProblemKind.BIHARMONIC.value:
                raise ConfigurationError("variant only applies to the biharmonic problem")
            if self.method == MethodKind.DGM.value:
                raise ConfigurationError("variant only applies to MIM methods")
        for name in ("dim", "depth", "width", "batch_interior", "batch_boundary",
                     "batch_initial", "eval_points", "cadence", "window"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive")
        if self.iters < 0 or self.checkpoint_every < 0:
            raise ConfigurationError("iters and checkpoint_every must be nonnegative")
        if self.lr <= 0 or self.time_horizon <= 0:
            raise ConfigurationError("lr and time_horizon must be positive")
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ConfigurationError("penalty weights must be nonnegative")
        if self.problem == ProblemKind.MONGE_AMPERE.value and self.dim > 8:
            raise ConfigurationError("Monge-Ampere supports dim <= 8")
        return self

    def resolved_variant(self):
        if self.variant is not None:
            return VariantKind(self.variant)
        if self.problem == ProblemKind.BIHARMONIC.value and self.method != MethodKind.DGM.value:
            return VariantKind.ALL
        return None

    # -- flat key = value serialization --------------------------------------
    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_mapping(cls, raw: dict) -> "RunConfig":
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        kw = {}
        for key, value in raw.items():
            if key not in types:
                raise ConfigurationError(f"unknown config key {key!r}")
            kw[key] = _coerce(types[key], value, key)
        return cls(**kw)

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        return cls.from_mapping(parse_key_values(text))


def parse_key_values(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def _coerce(type_name, value, key):
    if not isinstance(value, str):
        return value
    t = str(type_name)
    try:
        if "bool" in t:
            low = value.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(value)
            return low in ("true", "1", "yes")
        if "int" in t:
            return int(value)
        if "float" in t:
            return float(value)
    except ValueError:
        raise ConfigurationError(f"bad value for {key}: {value!r}") from None
    if "Optional" in t and value.lower() in ("", "none"):
        return None
    return value


@dataclass
class MetricsRecord:
    iteration: int
    loss: float
    errors: dict = field(default_factory=dict)
    wall_s: Optional[float] = None


def trailing_window(records: list[MetricsRecord], window: int) -> dict:
    """Mean of each error over the final ``window`` records."""
    tail = records[-window:]
    keys = tail[0].errors.keys() if tail else []
    return {k: float(np.mean([r.errors[k] for r in tail])) for k in keys}


def _split(flat, sizes):
    return np.split(flat, np.cumsum(sizes)[:-1])


def setup(config: RunConfig):
    """Problem, freshly initialized model and loss weights for a validated config."""
    config.validate()
    problem = make_problem(config.problem, config.dim, config.time_horizon)
    multiplier = None if config.neumann_multiplier else False
    model = build_model(problem, config.method, config.resolved_variant(), config.depth,
                        config.width, config.activation, stream(config.seed, "init"), multiplier)
    weights = PenaltyWeights(config.lambda1, config.lambda2, config.lambda3)
    return problem, model, weights


def train(config: RunConfig, sink: Callable[[MetricsRecord], None] | None = None,
          checkpoint_dir: Path | None = None) -> list[MetricsRecord]:
    """Run ``config.iters`` Adam updates; one record every ``cadence`` iterations and at the end.

    The loss stored with iteration ``k`` is computed on iteration ``k``'s batch
    before the ``k``-th update, and errors are those of the same parameters.
    """
    problem, model, weights = setup(config)
    for msg in activation_warnings(problem, config.method, config.activation,
                                   config.resolved_variant()):
        log.warning(msg)
    sampler = Sampler(problem.domain, config.seed, config.batch_interior, config.batch_boundary,
                      config.batch_initial)
    eval_set = EvalSet.draw(problem, config.eval_points, config.seed)
    sizes = [p.size for p in model.params]
    params = np.concatenate(model.params)
    state = AdamState.zeros(params.size, lr=config.lr)
    records: list[MetricsRecord] = []
    start = time.perf_counter()

    for k in range(config.iters + 1):
        tape = Tape()
        value = loss(problem, model.bind(tape), sampler.batch(k), weights)
        total = value.total
        loss_val = float(total.value)
        if not math.isfinite(loss_val):
            raise TrainingDiverged(f"loss is {loss_val} at iteration {k}", records)
        if k % config.cadence == 0 or k == config.iters:
            errs = evaluate_all(problem, model, eval_set)
            rec = MetricsRecord(k, loss_val, errs,
                                time.perf_counter() - start if config.timing else None)
            records.append(rec)
            if sink is not None:
                sink(rec)
        if k == config.iters:
            break
        grad = tape.backward(total).flat
        try:
            params = adam_step(state, params, grad, loss_val)
        except TrainingDiverged as exc:
            raise TrainingDiverged(f"iteration {k}: {exc}", records) from None
        model = model.with_params(_split(params, sizes))
        if checkpoint_dir is not None and config.checkpoint_every \
                and (k + 1) % config.checkpoint_every == 0:
            for i, p in enumerate(model.params):
                save_params(Path(checkpoint_dir) / f"ckpt_{k + 1:07d}_net{i}.bin", p)
    return records
