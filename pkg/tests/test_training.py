import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mimres.network import ConfigurationError
from mimres.training import (AdamState, MetricsRecord, RunConfig, TrainingDiverged, adam_step,
                             train, trailing_window)


def test_adam_first_step():
    s = AdamState.zeros(4)
    out = adam_step(s, np.zeros(4), np.ones(4))
    assert np.allclose(out, -1e-3 / (1 + 1e-8), rtol=1e-15)
    assert s.t == 1


def test_adam_zero_gradient_leaves_params():
    s = AdamState.zeros(3)
    adam_step(s, np.zeros(3), np.array([1.0, -2.0, 0.5]))
    m, v = s.m.copy(), s.v.copy()
    p = np.array([0.1, 0.2, 0.3])
    out = adam_step(s, p, np.zeros(3))
    assert np.allclose(s.m, 0.9 * m) and np.allclose(s.v, 0.999 * v)
    assert not np.array_equal(out, p)  # momentum still moves params
    fresh = AdamState.zeros(3)
    assert np.array_equal(adam_step(fresh, p, np.zeros(3)), p)


@given(st.integers(0, 9), st.floats(1e-6, 1e3))
def test_adam_sign_property(i, g):
    grad = np.zeros(10)
    grad[i] = g
    out = adam_step(AdamState.zeros(10), np.zeros(10), grad)
    assert out[i] < 0 and np.count_nonzero(out) == 1


def test_adam_rejects_bad_gradients():
    s = AdamState.zeros(2)
    with pytest.raises(ValueError):
        adam_step(s, np.zeros(2), np.zeros(3))
    with pytest.raises(TrainingDiverged, match="max finite"):
        adam_step(s, np.zeros(2), np.array([np.nan, 3.0]), loss_value=1.0)


def _small(**kw):
    base = dict(problem="poisson", method="mim1", dim=2, depth=1, width=4, iters=20, cadence=5,
                batch_interior=64, batch_boundary=32, eval_points=200, seed=3)
    base.update(kw)
    return RunConfig(**base)


def test_zero_iterations_one_record():
    recs = train(_small(iters=0))
    assert len(recs) == 1 and recs[0].iteration == 0


def test_record_cadence_and_determinism():
    a, b = train(_small()), train(_small())
    assert [r.iteration for r in a] == [0, 5, 10, 15, 20]
    assert [(r.loss, r.errors) for r in a] == [(r.loss, r.errors) for r in b]
    c = train(_small(seed=4))
    assert a[-1].loss != c[-1].loss


def test_final_record_when_cadence_does_not_divide():
    assert [r.iteration for r in train(_small(iters=7, cadence=5))] == [0, 5, 7]


def test_first_loss_is_before_any_update():
    one, zero = train(_small(iters=1, cadence=1)), train(_small(iters=0))
    assert one[0].loss == zero[0].loss and one[1].loss != one[0].loss


def test_mim2_trains_all_networks_jointly(tmp_path):
    cfg = _small(method="mim2", iters=3, checkpoint_every=3)
    train(cfg, checkpoint_dir=tmp_path)
    assert sorted(p.name for p in tmp_path.iterdir()) == ["ckpt_0000003_net0.bin",
                                                          "ckpt_0000003_net1.bin"]


def test_divergence_aborts_with_records(monkeypatch):
    import mimres.training as tr

    real, calls = tr.loss, []

    def poisoned(problem, model, batch, weights):
        value = real(problem, model, batch, weights)
        calls.append(1)
        if len(calls) > 6:
            value.terms["res:pde"] = value.terms["res:pde"] * float("nan")
        return value

    monkeypatch.setattr(tr, "loss", poisoned)
    with pytest.raises(TrainingDiverged, match="iteration 6") as info:
        train(_small(iters=20, cadence=5))
    assert [r.iteration for r in info.value.records] == [0, 5]


def test_config_validation():
    for bad in (dict(problem="heat"), dict(method="pinn"), dict(variant="partial"),
                dict(problem="biharmonic", method="dgm", variant="all"), dict(width=0),
                dict(iters=-1), dict(problem="monge-ampere", dim=9)):
        with pytest.raises((ConfigurationError, ValueError)):
            _small(**bad).validate()


def test_config_text_roundtrip():
    cfg = RunConfig(problem="biharmonic", method="mim2", variant="partial", lambda2=0.5,
                    neumann_multiplier=False, out="x/y")
    assert RunConfig.from_text(cfg.to_text()) == cfg
    assert RunConfig.from_text("# comment\nproblem = kdv\ndim = 3  # trailing\n").dim == 3
    with pytest.raises(ConfigurationError):
        RunConfig.from_text("colour = blue\n")
    with pytest.raises(ConfigurationError):
        RunConfig.from_text("dim = two\n")


def test_trailing_window():
    recs = [MetricsRecord(i, 0.0, {"u": float(i)}) for i in range(5)]
    assert trailing_window(recs, 2) == {"u": 3.5}
    assert trailing_window(recs, 50) == {"u": 2.0}


def test_toy_poisson_loss_drops():
    finals = []
    for seed in range(5):
        cfg = RunConfig(problem="poisson", method="mim1", dim=1, depth=1, width=4,
                        activation="square", iters=2000, cadence=2000, eval_points=100,
                        seed=seed)
        recs = train(cfg)
        finals.append(recs[-1].loss / recs[0].loss)
    assert np.median(finals) < 0.1


def test_config_is_plain_dataclass():
    assert {f.name for f in dataclasses.fields(RunConfig)} >= {
        "problem", "method", "variant", "dim", "time_horizon", "depth", "width", "activation",
        "iters", "lr", "batch_interior", "batch_boundary", "batch_initial", "eval_points",
        "cadence", "lambda1", "lambda2", "lambda3", "seed", "out", "checkpoint_every", "window"}
