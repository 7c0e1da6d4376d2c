"""``mimres`` command line: ``run``, ``table`` and ``curves`` subcommands."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .experiment import TABLES, CSVFormatError, emit_curves, run_single, run_table
from .network import ConfigurationError
from .training import RunConfig, TrainingDiverged, parse_key_values

EXIT_USAGE = 2
EXIT_DIVERGED = 3

# flag name -> RunConfig field
RUN_FLAGS = {
    "problem": str, "method": str, "variant": str, "dim": int, "time_horizon": float,
    "depth": int, "width": int, "activation": str, "iters": int, "lr": float,
    "batch_interior": int, "batch_boundary": int, "batch_initial": int, "eval_points": int,
    "cadence": int, "lambda1": float, "lambda2": float, "lambda3": float, "seed": int,
    "out": str, "checkpoint_every": int, "window": int,
}


def _add_config_flags(p: argparse.ArgumentParser):
    for name, typ in RUN_FLAGS.items():
        kw = {}
        if name == "problem":
            kw["choices"] = ["poisson", "monge-ampere", "biharmonic", "kdv"]
        if name == "method":
            kw["choices"] = ["dgm", "mim1", "mim2"]
        if name == "variant":
            kw["choices"] = ["all", "partial"]
        if name == "activation":
            kw["choices"] = ["square", "relu", "requ", "recu"]
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None, **kw)
    p.add_argument("--no-neumann-multiplier", dest="neumann_multiplier", action="store_false",
                   default=None, help="MIM Poisson: penalize p.n on the boundary instead")
    p.add_argument("--timing", dest="timing", action="store_true", default=None,
                   help="fill the wall_s column (makes metrics.csv run-dependent)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mimres", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train one configuration")
    run.add_argument("--config", type=Path, help="file of 'key = value' lines; flags override")
    _add_config_flags(run)

    table = sub.add_parser("table", help="run a benchmark grid")
    table.add_argument("table_id", choices=TABLES)
    table.add_argument("--out-root", type=Path, default=None)
    table.add_argument("--jobs", type=int, default=1, help="independent runs in parallel")
    _add_config_flags(table)

    curves = sub.add_parser("curves", help="log10 error curves from a metrics.csv")
    curves.add_argument("metrics_csv", type=Path)
    curves.add_argument("--out-dir", type=Path, default=None)
    return parser


def _overrides(args) -> dict:
    keys = list(RUN_FLAGS) + ["neumann_multiplier", "timing"]
    return {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}


def _cmd_run(args, parser) -> int:
    raw = parse_key_values(args.config.read_text()) if args.config else {}
    raw.update(_overrides(args))
    if "problem" not in raw:
        parser.error("--problem is required (on the command line or in --config)")
    config = RunConfig.from_mapping(raw).validate()
    try:
        meta = run_single(config)
    except TrainingDiverged as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    print(f"wrote {Path(meta['config']['out']) / 'metrics.csv'}")
    for q, e in meta["trailing_window_errors"].items():
        print(f"  err_{q} = {e:.4e}")
    return 0


def _cmd_table(args) -> int:
    overrides = _overrides(args)
    if "out" in overrides:
        raise ConfigurationError("--out is per run; use --out-root for tables")
    path = run_table(args.table_id, overrides, args.out_root, max(1, args.jobs))
    print(f"wrote {path}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return _cmd_run(args, parser)
        if args.command == "table":
            return _cmd_table(args)
        written = emit_curves(args.metrics_csv, args.out_dir)
        for path in written.values():
            print(f"wrote {path}")
        return 0
    except CSVFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ConfigurationError, ValueError) as exc:
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
