"""ResNet approximator and parameter bookkeeping.

Block ``k`` computes ``s_k = act(W2 act(W1 s_{k-1} + b1) + b2) + s_{k-1}``.
The input ``x`` is embedded into width ``n`` by a fixed, non-trainable map
(zero padding when ``input_dim <= n``) to form ``s_0``; the first block's inner
weight acts on ``x`` directly, so it is ``n x input_dim``.  A trainable affine
map ``T`` takes ``s_m`` to the outputs.

Flat parameter layout::

    W1_1 (n, input_dim), b1_1 (n), W2_1 (n, n), b2_1 (n),
    W1_k (n, n), b1_k (n), W2_k (n, n), b2_k (n)    for k = 2..m
    T (output_dim, n), bT (output_dim)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .autodiff import tape as _t
from .autodiff.jet import ActivationKind, Jet, jet_activation


class MethodKind(str, Enum):
    DGM = "dgm"
    MIM1 = "mim1"
    MIM2 = "mim2"


class VariantKind(str, Enum):
    ALL = "all"
    PARTIAL = "partial"


class ProblemKind(str, Enum):
    POISSON = "poisson"
    MONGE_AMPERE = "monge-ampere"
    BIHARMONIC = "biharmonic"
    KDV = "kdv"


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class NetworkSpec:
    depth: int
    width: int
    input_dim: int
    output_dim: int
    activation: ActivationKind = ActivationKind.SQUARE

    def __post_init__(self):
        for name in ("depth", "width", "input_dim", "output_dim"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive")
        object.__setattr__(self, "activation", ActivationKind(self.activation))

    def shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        n, d = self.width, self.input_dim
        out = [("W1_1", (n, d)), ("b1_1", (n,)), ("W2_1", (n, n)), ("b2_1", (n,))]
        for k in range(2, self.depth + 1):
            out += [(f"W1_{k}", (n, n)), (f"b1_{k}", (n,)), (f"W2_{k}", (n, n)), (f"b2_{k}", (n,))]
        out += [("T", (self.output_dim, n)), ("bT", (self.output_dim,))]
        return out

    @property
    def size(self) -> int:
        return sum(int(np.prod(s)) for _, s in self.shapes())

    def embedding(self) -> np.ndarray:
        """Fixed ``(n, input_dim)`` map forming ``s_0``; coordinate i lands in slot i mod n."""
        e = np.zeros((self.width, self.input_dim))
        for i in range(self.input_dim):
            e[i % self.width, i] = 1.0
        return e


def init_params(spec: NetworkSpec, seed) -> np.ndarray:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    parts = []
    for name, shape in spec.shapes():
        if name.startswith("b"):
            parts.append(np.zeros(shape))
        else:
            bound = np.sqrt(1.0 / shape[1])
            parts.append(rng.uniform(-bound, bound, size=shape))
    return np.concatenate([p.ravel() for p in parts])


def unpack(spec: NetworkSpec, params) -> dict:
    """Split a flat vector (array or tape Var) into named weight blocks."""
    out, pos = {}, 0
    for name, shape in spec.shapes():
        size = int(np.prod(shape))
        chunk = params[pos:pos + size]
        out[name] = chunk.reshape(*shape) if len(shape) > 1 else chunk
        pos += size
    if pos != np.shape(_t.value_of(params))[0]:
        raise ConfigurationError(f"parameter vector has length {np.shape(_t.value_of(params))[0]}, "
                                 f"expected {pos}")
    return out


class NetworkEval:
    """A network spec bound to one parameter vector (numpy array or tape Var)."""

    def __init__(self, spec: NetworkSpec, params):
        self.spec = spec
        self.params = params
        self._blocks = unpack(spec, params)
        self._embed = spec.embedding()

    def bind(self, tape: _t.Tape) -> "NetworkEval":
        return NetworkEval(self.spec, tape.bind(_t.value_of(self.params)))

    def __call__(self, x: Jet) -> Jet:
        """Jet-valued forward pass; the input's trailing axis is ``input_dim``."""
        dim = np.shape(_t.value_of(x.value))[-1]
        if dim != self.spec.input_dim:
            raise ConfigurationError(f"input has {dim} coordinates, network expects "
                                     f"{self.spec.input_dim}")
        w, act = self._blocks, self.spec.activation
        s = x.linear(self._embed)
        h = jet_activation(act, x.linear(w["W1_1"], w["b1_1"]))
        s = jet_activation(act, h.linear(w["W2_1"], w["b2_1"])) + s
        for k in range(2, self.spec.depth + 1):
            h = jet_activation(act, s.linear(w[f"W1_{k}"], w[f"b1_{k}"]))
            s = jet_activation(act, h.linear(w[f"W2_{k}"], w[f"b2_{k}"])) + s
        return s.linear(w["T"], w["bT"])

    def forward(self, x) -> np.ndarray:
        """Plain forward on ``(B, input_dim)`` points (or a single point)."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        xb = np.atleast_2d(x)
        if xb.shape[-1] != self.spec.input_dim:
            raise ConfigurationError(f"input has {xb.shape[-1]} coordinates, network expects "
                                     f"{self.spec.input_dim}")
        out = self(Jet((0,), {(0,): xb})).value
        return out[0] if single else out


# -- output layouts and counting ------------------------------------------------

def groups(problem: ProblemKind, variant: VariantKind | None, d: int) -> list[tuple[str, int]]:
    """Unknown groups ``(name, width)`` in output order ``[u | p | q | w]``."""
    problem = ProblemKind(problem)
    if problem in (ProblemKind.POISSON, ProblemKind.MONGE_AMPERE):
        return [("u", 1), ("p", d)]
    if problem is ProblemKind.BIHARMONIC:
        if VariantKind(variant or VariantKind.ALL) is VariantKind.ALL:
            return [("u", 1), ("p", d), ("q", 1), ("w", d)]
        return [("u", 1), ("q", 1)]
    return [("u", 1), ("p", d), ("q", d)]


def input_dim(problem: ProblemKind, d: int) -> int:
    return d + 1 if ProblemKind(problem) is ProblemKind.KDV else d


def network_specs(method, problem, variant, depth, width, d, activation=ActivationKind.SQUARE,
                  ) -> list[tuple[tuple[str, ...], NetworkSpec]]:
    """Networks for a configuration, each tagged with the groups it outputs."""
    method, problem = MethodKind(method), ProblemKind(problem)
    if variant is not None and VariantKind(variant) is VariantKind.PARTIAL \
            and problem is not ProblemKind.BIHARMONIC:
        raise ConfigurationError("variant 'partial' only applies to the biharmonic problem")
    din = input_dim(problem, d)
    if method is MethodKind.DGM:
        return [(("u",), NetworkSpec(depth, width, din, 1, activation))]
    gs = groups(problem, variant, d)
    if method is MethodKind.MIM1:
        return [(tuple(g for g, _ in gs), NetworkSpec(depth, width, din, sum(w for _, w in gs),
                                                      activation))]
    return [((g,), NetworkSpec(depth, width, din, w, activation)) for g, w in gs]


def parameter_count(method, problem, variant, m, n, d) -> int:
    """Closed-form number of trainable parameters.

    Time-dependent problems have ``d + 1`` inputs, which adds ``n`` per network
    relative to the purely spatial formulas.
    """
    method, problem = MethodKind(method), ProblemKind(problem)
    if variant is not None and VariantKind(variant) is VariantKind.PARTIAL \
            and problem is not ProblemKind.BIHARMONIC:
        raise ConfigurationError("variant 'partial' only applies to the biharmonic problem")
    extra = 0
    if problem is ProblemKind.KDV:
        extra = 3 * n if method is MethodKind.MIM2 else n
    if method is MethodKind.DGM:
        return (2 * m - 1) * n**2 + (2 * m + d + 1) * n + 1 + extra
    partial = variant is not None and VariantKind(variant) is VariantKind.PARTIAL
    if method is MethodKind.MIM1:
        if problem in (ProblemKind.POISSON, ProblemKind.MONGE_AMPERE):
            base = (2 * m - 1) * n**2 + (2 * m + 2 * d + 1) * n + d + 1
        elif problem is ProblemKind.BIHARMONIC and not partial:
            base = (2 * m - 1) * n**2 + (2 * m + 3 * d + 2) * n + 2 * d + 2
        elif problem is ProblemKind.BIHARMONIC:
            base = (2 * m - 1) * n**2 + (2 * m + d + 2) * n + 2
        else:
            base = (2 * m - 1) * n**2 + (2 * m + 3 * d + 1) * n + 2 * d + 1
    else:
        if problem in (ProblemKind.POISSON, ProblemKind.MONGE_AMPERE):
            base = (4 * m - 2) * n**2 + (4 * m + 3 * d + 1) * n + d + 1
        elif problem is ProblemKind.BIHARMONIC and not partial:
            base = (8 * m - 4) * n**2 + (8 * m + 6 * d + 2) * n + 2 * d + 2
        elif problem is ProblemKind.BIHARMONIC:
            base = (4 * m - 2) * n**2 + (4 * m + 2 * d + 2) * n + 2
        else:
            base = (6 * m - 3) * n**2 + (6 * m + 5 * d + 1) * n + 2 * d + 1
    return base + extra


# -- checkpoint file ---------------------------------------------------------

MAGIC = b"MIMPARAM"
VERSION = 1


def save_params(path, params: np.ndarray) -> None:
    params = np.asarray(params, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<II", VERSION, params.size))
        fh.write(params.tobytes())


def load_params(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:8] != MAGIC:
        raise ValueError(f"{path}: not a parameter checkpoint")
    version, count = struct.unpack("<II", raw[8:16])
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    if len(raw) != 16 + 8 * count:
        raise ValueError(f"{path}: expected {count} values, file has {(len(raw) - 16) / 8:g}")
    return np.frombuffer(raw[16:], dtype="<f8").astype(float)
