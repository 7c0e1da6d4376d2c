"""Run orchestration: metrics CSV and metadata files, benchmark grids and error curves."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .losses import activation_warnings
from .metrics import QUANTITIES, sources
from .network import ConfigurationError, network_specs, parameter_count
from .sampling import RNG_ALGORITHM
from .training import MetricsRecord, RunConfig, TrainingDiverged, setup, train, trailing_window

log = logging.getLogger(__name__)

CSV_HEADER = ["iteration", "loss"] + [f"err_{q}" for q in QUANTITIES] + ["wall_s"]
LOG10_FLOOR = -16.0


def default_out_root() -> Path:
    return Path(os.environ.get("MIMRES_OUT", "runs"))


def run_name(config: RunConfig) -> str:
    parts = [config.problem, config.method]
    if config.resolved_variant() is not None:
        parts.append(config.resolved_variant().value)
    parts += [f"d{config.dim}", f"m{config.depth}", f"n{config.width}", config.activation,
              f"s{config.seed}"]
    return "-".join(parts)


# -- metrics CSV ---------------------------------------------------------------

def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def csv_row(rec: MetricsRecord) -> list[str]:
    return ([str(rec.iteration), _fmt(rec.loss)]
            + [_fmt(rec.errors.get(q)) for q in QUANTITIES] + [_fmt(rec.wall_s)])


class MetricsWriter:
    """Appends one line per record and flushes, so a diverged run leaves its prefix behind."""

    def __init__(self, path: Path):
        self.fh = open(path, "w", newline="")
        self.writer = csv.writer(self.fh, lineterminator="\n")
        self.writer.writerow(CSV_HEADER)

    def __call__(self, rec: MetricsRecord) -> None:
        self.writer.writerow(csv_row(rec))
        self.fh.flush()

    def close(self):
        self.fh.close()


class CSVFormatError(ValueError):
    pass


def read_metrics_csv(path) -> list[MetricsRecord]:
    text = Path(path).read_text()
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != CSV_HEADER:
        raise CSVFormatError(f"{path}:1: expected header {','.join(CSV_HEADER)}")
    out = []
    for lineno, row in enumerate(rows[1:], 2):
        if len(row) != len(CSV_HEADER):
            raise CSVFormatError(f"{path}:{lineno}: expected {len(CSV_HEADER)} fields, "
                                 f"got {len(row)}")
        try:
            it = int(row[0])
            loss = float(row[1])
            errs = {q: float(v) for q, v in zip(QUANTITIES, row[2:-1]) if v != ""}
            wall = float(row[-1]) if row[-1] else None
        except ValueError as exc:
            raise CSVFormatError(f"{path}:{lineno}: {exc}") from None
        out.append(MetricsRecord(it, loss, errs, wall))
    return out


# -- single run ------------------------------------------------------------------

def param_counts(config: RunConfig) -> dict:
    """Per-network counts of the constructed model and the closed-form total."""
    problem, model, _ = setup(config)
    specs = network_specs(config.method, config.problem, config.resolved_variant(),
                          config.depth, config.width, config.dim, config.activation)
    per_net = {"+".join(g): int(p.size) for (g, _), p in zip(specs, model.params)}
    formula = parameter_count(config.method, config.problem, config.resolved_variant(),
                              config.depth, config.width, config.dim)
    total = sum(per_net.values())
    if total != formula:
        raise AssertionError(f"constructed {total} parameters, closed form gives {formula}")
    return {"per_network": per_net, "total": total, "formula": formula}


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def run_single(config: RunConfig, extra_meta: dict | None = None) -> dict:
    """Train one configuration, writing ``metrics.csv`` and ``meta.json`` under its out dir.

    Returns the metadata dict.  Divergence is re-raised after the partial CSV
    and metadata (with ``status = diverged``) are on disk.
    """
    config.validate()
    out = Path(config.out) if config.out else default_out_root() / run_name(config)
    config = dataclasses.replace(config, out=str(out))
    out.mkdir(parents=True, exist_ok=True)
    problem, model, _ = setup(config)
    meta = {
        "config": dataclasses.asdict(config),
        "config_text": config.to_text(),
        "version": __version__,
        "rng": RNG_ALGORITHM,
        "start": _now(),
        "param_counts": param_counts(config),
        "neumann_form": _neumann_form(config),
        "metric_sources": sources(problem, model),
        "warnings": activation_warnings(problem, config.method, config.activation,
                                        config.resolved_variant()),
        "loss_convention": "loss at iteration k is evaluated before the k-th update",
        "window": config.window,
    }
    meta.update(extra_meta or {})
    writer = MetricsWriter(out / "metrics.csv")
    ckpt = out if config.checkpoint_every else None
    try:
        records = train(config, sink=writer, checkpoint_dir=ckpt)
        meta["status"] = "ok"
    except TrainingDiverged as exc:
        records = exc.records
        meta["status"] = "diverged"
        meta["error"] = str(exc)
        raise
    finally:
        writer.close()
        meta["end"] = _now()
        meta["trailing_window_errors"] = trailing_window(records, config.window) if records else {}
        meta["final_loss"] = records[-1].loss if records else None
        (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return meta


def _neumann_form(config: RunConfig) -> str | None:
    if config.problem != "poisson":
        return None
    if config.method == "dgm":
        return "penalty on du/dn"
    if config.neumann_multiplier:
        return "exact: p_i = x_i (1 - x_i) * raw_i"
    return "penalty on p.n"


# -- benchmark grids ---------------------------------------------------------------

POISSON_WIDTHS = {2: 5, 4: 10, 8: 15, 16: 20}
MONGE_AMPERE_WIDTHS = {2: (10, 20, 30), 4: (20, 30, 40), 8: (30, 40, 50)}
BIHARMONIC_WIDTHS = {2: 8, 4: 10, 8: 20}
KDV_WIDTH = 20
# the d=16 Poisson cell is expensive at desk scale; its iterations are capped
ITER_CAPS = {("poisson-neumann", 16): 5000}


def table_grid(table_id: str) -> list[dict]:
    """Configurations (as RunConfig keyword dicts) for a named benchmark table."""
    grid = []
    if table_id == "poisson-neumann":
        for d, n in POISSON_WIDTHS.items():
            for method in ("dgm", "mim1", "mim2"):
                grid.append(dict(problem="poisson", method=method, dim=d, depth=2, width=n,
                                 activation="square"))
    elif table_id == "poisson-depth-activation":
        for act in ("relu", "requ", "recu"):
            for m in (1, 2, 3):
                for method in ("dgm", "mim1", "mim2"):
                    grid.append(dict(problem="poisson", method=method, dim=4, depth=m, width=10,
                                     activation=act))
    elif table_id == "monge-ampere":
        for d, widths in MONGE_AMPERE_WIDTHS.items():
            for n in widths:
                for method in ("dgm", "mim1", "mim2"):
                    grid.append(dict(problem="monge-ampere", method=method, dim=d, depth=2,
                                     width=n, activation="requ"))
    elif table_id == "biharmonic":
        for d, n in BIHARMONIC_WIDTHS.items():
            for method, variant in (("dgm", None), ("mim1", "all"), ("mim1", "partial"),
                                    ("mim2", "all"), ("mim2", "partial")):
                grid.append(dict(problem="biharmonic", method=method, variant=variant, dim=d,
                                 depth=2, width=n, activation="square"))
    elif table_id == "kdv":
        for d in (1, 2, 3):
            for act in ("requ", "recu"):
                for method in ("dgm", "mim1", "mim2"):
                    grid.append(dict(problem="kdv", method=method, dim=d, depth=2,
                                     width=KDV_WIDTH, activation=act))
    else:
        raise ConfigurationError(f"unknown table {table_id!r}; choose from {', '.join(TABLES)}")
    return grid


TABLES = ("poisson-neumann", "poisson-depth-activation", "monge-ampere", "biharmonic", "kdv")


def table_configs(table_id: str, overrides: dict | None = None,
                  out_root: Path | None = None) -> list[tuple[RunConfig, dict]]:
    overrides = dict(overrides or {})
    out_root = Path(out_root) if out_root else default_out_root()
    result = []
    for cell in table_grid(table_id):
        extra = {}
        cfg = RunConfig.from_mapping({**cell, **overrides})
        cap = ITER_CAPS.get((table_id, cfg.dim))
        if cap is not None and "iters" not in overrides and cfg.iters > cap:
            extra["iteration_cap"] = {"requested": cfg.iters, "used": cap}
            cfg = dataclasses.replace(cfg, iters=cap)
        cfg = dataclasses.replace(cfg, out=str(out_root / table_id / run_name(cfg)))
        result.append((cfg.validate(), extra))
    return result


def _run_cell(args):
    cfg, extra = args
    try:
        meta = run_single(cfg, extra)
        return cfg, meta["trailing_window_errors"], "ok", extra
    except TrainingDiverged as exc:
        return cfg, {}, f"diverged: {exc}", extra


SUMMARY_KEYS = ["problem", "method", "variant", "dim", "depth", "width", "activation", "iters",
                "seed", "status", "capped"] + [f"err_{q}" for q in QUANTITIES]


def run_table(table_id: str, overrides: dict | None = None, out_root: Path | None = None,
              jobs: int = 1) -> Path:
    """Run every cell of a grid and write ``summary.csv`` with trailing-window errors."""
    cells = table_configs(table_id, overrides, out_root)
    root = Path(out_root) if out_root else default_out_root()
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell, cells))
    else:
        results = [_run_cell(c) for c in cells]
    path = root / table_id / "summary.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_KEYS)
        for cfg, errs, status, extra in results:
            w.writerow([cfg.problem, cfg.method, cfg.variant or "", cfg.dim, cfg.depth, cfg.width,
                        cfg.activation, cfg.iters, cfg.seed, status,
                        "yes" if "iteration_cap" in extra else "no"]
                       + [_fmt(errs.get(q)) for q in QUANTITIES])
    return path


# -- error curves ----------------------------------------------------------------------

def emit_curves(csv_path, out_dir=None) -> dict:
    """Write ``curve_<quantity>.csv`` files of (iteration, log10 error).

    Zero errors are clamped to ``LOG10_FLOOR`` with a warning.  Returns a
    mapping quantity -> written path.
    """
    records = read_metrics_csv(csv_path)
    out_dir = Path(out_dir) if out_dir else Path(csv_path).parent
    out_dir.mkdir(parents=True, exist_ok=True)
    present = [q for q in QUANTITIES if records and q in records[0].errors]
    written = {}
    for q in present:
        path = out_dir / f"curve_{q}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", f"log10_err_{q}"])
            for rec in records:
                e = rec.errors.get(q)
                if e is None:
                    raise CSVFormatError(f"{csv_path}: iteration {rec.iteration} lacks err_{q}")
                if e <= 0.0:
                    log.warning("zero %s error at iteration %d clamped to %g", q, rec.iteration,
                                LOG10_FLOOR)
                    val = LOG10_FLOOR
                else:
                    val = max(math.log10(e), LOG10_FLOOR)
                w.writerow([rec.iteration, repr(val)])
        written[q] = path
    return written
