"""Command-line entry point: ``eulerlimit <subcommand> ...``.

Exit codes: 0 success, 1 configuration error (including too few N for a
rate fit), 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import _backend
from .config import load_init_stats_config, load_sweep_config
from .errors import ConfigError, FitError, NumericalError
from .flows import flow_residuals, make_flow
from .green import GreenKernel, zero_mean_residual
from .oracle import green_oracle_many
from .sampling import estimate_initial_h2_scaling
from .sweep import fit_rate, run_cell, run_sweep

log = logging.getLogger("eulerlimit")

KERNEL_TOL = 1e-8
MEAN_TOL = 1e-7
FLOW_TOL = 1e-10
INIT_SLOPE_MAX = -0.10


def _emit(obj):
    print(json.dumps(obj, indent=2, allow_nan=True))


def cmd_simulate(args):
    cfg = load_sweep_config(args.config)
    if len(cfg.N_list) != 1 or len(cfg.seeds) != 1:
        raise ConfigError("simulate runs one cell: give a single N and a single seed")
    records, wall, meta = run_cell(cfg, cfg.N_list[0], cfg.seeds[0])
    out = args.output or cfg.output
    lines = [json.dumps(r, allow_nan=True) for r in records]
    if out:
        path = Path(out)
        path.mkdir(parents=True, exist_ok=True)
        (path / "simulate.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
        log.info("wrote %d records to %s", len(lines), path / "simulate.jsonl")
    else:
        print("\n".join(lines))
    log.info("dt=%.6g relative energy drift=%s wall=%.2fs", meta["dt"], meta["drift"], wall)
    err = next((r["error"] for r in records if r.get("error")), None)
    if err:
        log.error("cell failed: %s: %s", err["kind"], err["message"])
        return 2
    return 0


def cmd_sweep(args):
    cfg = load_sweep_config(args.config)
    if cfg.output is None and args.output is None:
        raise ConfigError("sweep needs an output directory (config key 'output' or --output)")
    res = run_sweep(cfg, workers=args.workers, output=args.output)
    summary = {
        "records": str(res.jsonl_path),
        "summary_csv": str(res.csv_path),
        "cells": len(res.cell_meta),
        "failed_cells": [{"N": m["N"], "seed": m["seed"], **m["error"]} for m in res.failed_cells],
        "regime_flag": cfg.regime_flag,
    }
    try:
        fit = fit_rate(res.records)
        summary["fit"] = {"slope": fit.slope, "stderr": fit.stderr, "per_N": fit.per_n, "excluded_cells": fit.excluded_cells}
    except FitError as exc:
        summary["fit"] = None
        summary["fit_note"] = str(exc)
    _emit(summary)
    return 2 if res.failed_cells else 0


def cmd_init_stats(args):
    cfg = load_init_stats_config(args.config)
    res = estimate_initial_h2_scaling(
        cfg["d"], cfg["N_list"], trials=cfg["trials"], seed=cfg["seed"], epsilon=cfg["epsilon"], compare_lattice=cfg["lattice"]
    )
    if cfg["d"] == 3:
        verdict = "pass" if res.slope <= INIT_SLOPE_MAX else "fail"
    else:
        verdict = "no-verdict"
    report = {
        "d": res.dimension,
        "rows": res.rows,
        "slope": res.slope,
        "slope_stderr": res.slope_stderr,
        "verdict": verdict,
        "lattice": res.lattice,
        "warning": res.warning,
    }
    if cfg["output"]:
        path = Path(cfg["output"])
        path.mkdir(parents=True, exist_ok=True)
        with open(path / "init_stats.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["d", "N", "trials", "mean_stat", "stderr", "slope"])
            for r in res.rows:
                w.writerow([r["d"], r["N"], r["trials"], r["mean_stat"], r["stderr"], res.slope])
    if res.warning:
        log.warning(res.warning)
    _emit(report)
    return 0


def cmd_kernel_check(args):
    t0 = time.perf_counter()
    kernel = GreenKernel(args.d)
    rng = np.random.default_rng(args.seed)
    pts = rng.random((args.points, args.d)) - 0.5
    err = float(np.max(np.abs(kernel.eval_g(pts) - green_oracle_many(pts))))
    mean = zero_mean_residual(kernel)
    ok = err <= KERNEL_TOL and abs(mean) <= MEAN_TOL
    _emit(
        {
            "d": args.d,
            "backend": _backend.NAME,
            "ewald_split": kernel.ewald_split,
            "fourier_cutoff": kernel.fourier_cutoff,
            "n_modes": kernel.n_modes,
            "points": args.points,
            "max_abs_error_vs_oracle": err,
            "zero_mean_residual": mean,
            "g0_at_origin": kernel.g0_at_origin(),
            "passed": ok,
            "seconds": time.perf_counter() - t0,
        }
    )
    return 0 if ok else 2


def _parse_params(items):
    params = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--param expects key=value, got {item!r}")
        try:
            params[key] = float(value)
        except ValueError:
            raise ConfigError(f"--param {key}: not a number: {value!r}") from None
    return params


def cmd_flow_check(args):
    flow = make_flow(args.flow, **_parse_params(args.param))
    res = flow_residuals(flow, n=args.grid)
    checked = {k: v for k, v in res.items() if math.isfinite(v)}
    ok = all(v <= FLOW_TOL for v in checked.values())
    _emit({"flow": flow.describe(), "grid": args.grid, "residuals": res, "tolerance": FLOW_TOL, "passed": ok})
    return 0 if ok else 2


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors (exit 1), not numerical ones."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="eulerlimit", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="integrate one (N, seed) cell and write its observer stream")
    s.add_argument("--config", required=True)
    s.add_argument("--output", help="directory for simulate.jsonl (default: config output or stdout)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", help="run all (N, seed) cells of a config")
    s.add_argument("--config", required=True)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--output", help="override the config output directory")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("init-stats", help="Monte-Carlo rate of the initial Coulomb discrepancy")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_init_stats)

    s = sub.add_parser("kernel-check", help="compare the Ewald kernel with the independent oracle")
    s.add_argument("-d", type=int, choices=(2, 3), required=True)
    s.add_argument("--points", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_kernel_check)

    s = sub.add_parser("flow-check", help="residuals of a steady flow family")
    s.add_argument("--flow", required=True)
    s.add_argument("--param", action="append", metavar="KEY=VALUE")
    s.add_argument("--grid", type=int, default=64)
    s.set_defaults(func=cmd_flow_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (ConfigError, FitError) as exc:
        log.error("configuration error: %s", exc)
        return 1
    except (NumericalError, FloatingPointError) as exc:
        log.error("numerical failure: %s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
