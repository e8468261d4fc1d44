"""(N, eps_N, seed) convergence sweeps with streaming JSONL output.

A sweep runs one cell per (N, seed): sample, integrate, observe.  Records
are written cell by cell in config order, so the JSONL stream depends only
on the config and is identical for any number of workers.  Wall-clock times
go to the CSV summary only.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import GYROKINETIC, QUASINEUTRAL, Stepper, ParticleState, default_dt, kinetic_energy
from .errors import CollisionError, ConfigError, EulerLimitError, FitError, NumericalError
from .flows import make_flow
from .green import GreenKernel
from .modulated import modulated_energy
from .sampling import SamplingConfig, loglog_fit, sample_initial

ENERGY_DRIFT_GATE = 1e-4

SWEEP_KEYS = {
    "regime",
    "d",
    "flow",
    "N_list",
    "epsilon_rule",
    "t_end",
    "observation_interval",
    "seeds",
    "sampling",
    "output",
    "dt",
}
REQUIRED_KEYS = SWEEP_KEYS - {"dt", "output"}
RECORD_FIELDS = [
    "regime",
    "d",
    "N",
    "epsilon",
    "gamma",
    "seed",
    "t",
    "h1",
    "h2",
    "total",
    "E_total",
    "min_dist",
    "gaps",
    "regime_flag",
    "valid",
    "error",
]


def _as_number(value, name, positive=False, nonneg=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} must be a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value) or (positive and value <= 0) or (nonneg and value < 0):
        raise ConfigError(f"{name} out of range: {value}")
    return value


def _strict(mapping, allowed, where):
    if not isinstance(mapping, dict):
        raise ConfigError(f"{where} must be a mapping")
    extra = set(mapping) - set(allowed)
    if extra:
        raise ConfigError(f"unknown keys in {where}: {sorted(extra)}")


@dataclass(frozen=True)
class EpsilonRule:
    """eps_N = c N^(-gamma)."""

    c: float = 1.0
    gamma: float = 0.0

    def __post_init__(self):
        _as_number(self.c, "epsilon_rule.c", positive=True)
        _as_number(self.gamma, "epsilon_rule.gamma", nonneg=True)

    def __call__(self, n: int) -> float:
        return self.c * float(n) ** (-self.gamma)


def regime_threshold(d: int) -> float:
    """Largest admissible gamma (exclusive) for eps_N = c N^-gamma: 1/(d(d+1))."""
    return 1.0 / (d * (d + 1))


@dataclass(frozen=True)
class SweepConfig:
    regime: str
    d: int
    flow: dict
    N_list: tuple
    epsilon_rule: EpsilonRule
    t_end: float
    observation_interval: float
    seeds: tuple
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    output: str | None = None
    dt: float | None = None

    @classmethod
    def from_dict(cls, raw: dict) -> "SweepConfig":
        _strict(raw, SWEEP_KEYS, "config")
        missing = REQUIRED_KEYS - set(raw)
        if missing:
            raise ConfigError(f"missing config keys: {sorted(missing)}")
        rule = raw["epsilon_rule"]
        _strict(rule, {"c", "gamma"}, "epsilon_rule")
        sampling = dict(raw["sampling"] or {})
        _strict(sampling, {"density", "velocity_mode", "eta", "placement"}, "sampling")
        flow = raw["flow"]
        _strict(flow, {"family", "params"}, "flow")
        if "family" not in flow:
            raise ConfigError("flow.family is required")
        return cls(
            regime=raw["regime"],
            d=raw["d"],
            flow={"family": flow["family"], "params": dict(flow.get("params") or {})},
            N_list=tuple(raw["N_list"]) if isinstance(raw["N_list"], (list, tuple)) else raw["N_list"],
            epsilon_rule=EpsilonRule(**rule),
            t_end=raw["t_end"],
            observation_interval=raw["observation_interval"],
            seeds=tuple(raw["seeds"]) if isinstance(raw["seeds"], (list, tuple)) else raw["seeds"],
            sampling=SamplingConfig(**sampling),
            output=raw.get("output"),
            dt=raw.get("dt"),
        )

    def __post_init__(self):
        if self.regime not in (QUASINEUTRAL, GYROKINETIC):
            raise ConfigError(f"regime must be {QUASINEUTRAL} or {GYROKINETIC}")
        if self.d not in (2, 3) or isinstance(self.d, bool):
            raise ConfigError("d must be 2 or 3")
        if self.regime == GYROKINETIC and self.d != 2:
            raise ConfigError("the gyrokinetic regime needs d = 2")
        ns = self.N_list
        if (
            not isinstance(ns, tuple)
            or not ns
            or any(isinstance(n, bool) or not isinstance(n, int) or n < 1 for n in ns)
        ):
            raise ConfigError("N_list must be a non-empty list of positive integers")
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ConfigError("N_list must be strictly increasing")
        if (
            not isinstance(self.seeds, tuple)
            or not self.seeds
            or any(isinstance(s, bool) or not isinstance(s, int) or s < 0 for s in self.seeds)
        ):
            raise ConfigError("seeds must be a non-empty list of non-negative integers")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        _as_number(self.t_end, "t_end", nonneg=True)
        _as_number(self.observation_interval, "observation_interval", positive=True)
        if self.dt is not None:
            _as_number(self.dt, "dt", positive=True)
        flow = self.build_flow()
        if flow.dimension != self.d:
            raise ConfigError(f"flow {flow.family} is {flow.dimension}D but d = {self.d}")

    def build_flow(self):
        return make_flow(self.flow["family"], **self.flow["params"])

    @property
    def regime_flag(self) -> str:
        return "in-regime" if self.epsilon_rule.gamma < regime_threshold(self.d) else "out-of-regime"

    def step_size(self, epsilon: float) -> float:
        """Requested (or default) dt, shrunk so that it divides the observation interval."""
        target = self.dt if self.dt is not None else default_dt(self.regime, epsilon)
        k = max(1, math.ceil(self.observation_interval / target - 1e-9))
        return self.observation_interval / k

    def as_dict(self) -> dict:
        out = {
            "regime": self.regime,
            "d": self.d,
            "flow": self.flow,
            "N_list": list(self.N_list),
            "epsilon_rule": asdict(self.epsilon_rule),
            "t_end": self.t_end,
            "observation_interval": self.observation_interval,
            "seeds": list(self.seeds),
            "sampling": {k: v for k, v in self.sampling.as_dict().items() if k != "seed"},
        }
        if self.output is not None:
            out["output"] = self.output
        if self.dt is not None:
            out["dt"] = self.dt
        return out


_KERNELS: dict = {}


def _kernel(d):
    if d not in _KERNELS:
        _KERNELS[d] = GreenKernel(d)
    return _KERNELS[d]


def observe_state(state: ParticleState, kernel: GreenKernel, flow) -> dict:
    """Energy, modulated energy, minimum distance and weak-star gaps in one pass."""
    n = state.n
    if n > 1:
        _, pot, dmin, _ = kernel.pair_sums(state.positions, want_pot=True, want_grad=False)
    else:
        pot, dmin = 0.0, math.inf
    pair = pot / (2.0 * state.epsilon**2 * n * n)
    rep = modulated_energy(state, kernel, flow, pair_energy=pair)
    return {
        "h1": rep.h1,
        "h2": rep.h2,
        "total": rep.total,
        "E_total": kinetic_energy(state) + pair,
        "min_dist": dmin if math.isfinite(dmin) else None,
        "gaps": dict(rep.weakstar_gaps),
    }


def run_cell(config: SweepConfig, n: int, seed: int):
    """Run one (N, seed) cell; returns (records, wall_time, meta)."""
    start = time.perf_counter()
    eps = config.epsilon_rule(n)
    base = {
        "regime": config.regime,
        "d": config.d,
        "N": n,
        "epsilon": eps,
        "gamma": config.epsilon_rule.gamma,
        "seed": seed,
    }
    dt = config.step_size(eps)
    meta = {"dt": dt, "drift": None}
    records = []
    try:
        flow = config.build_flow()
        kernel = _kernel(config.d)
        cfg = SamplingConfig(**{**config.sampling.as_dict(), "seed": seed})
        state = sample_initial(cfg, flow, n, eps, config.regime)
        every = int(round(config.observation_interval / dt))
        n_steps = int(round(config.t_end / dt))
        stepper = Stepper(state, kernel, dt)
        records.append({**base, "t": 0.0, **observe_state(state, kernel, flow)})
        for k in range(1, n_steps + 1):
            stepper.step()
            state.time = k * dt
            if not (np.all(np.isfinite(state.positions)) and np.all(np.isfinite(state.velocities))):
                raise NumericalError(f"non-finite state at t={state.time:.6g}")
            if k % every == 0 or k == n_steps:
                records.append({**base, "t": state.time, **observe_state(state, kernel, flow)})
    except (EulerLimitError, FloatingPointError) as exc:
        kind = type(exc).__name__
        records.append({**base, "t": records[-1]["t"] if records else 0.0, "error": {"kind": kind, "message": str(exc)}})
        return _finish(records, config, meta), time.perf_counter() - start, meta
    return _finish(records, config, meta), time.perf_counter() - start, meta


def _finish(records, config, meta):
    energies = [r["E_total"] for r in records if "E_total" in r]
    drift = None
    if len(energies) > 1:
        e0 = energies[0]
        drift = max(abs(e - e0) for e in energies) / max(abs(e0), 1e-300)
    failed = any("error" in r for r in records)
    valid = (not failed) and (drift is None or drift <= ENERGY_DRIFT_GATE)
    meta["drift"] = drift
    out = []
    for r in records:
        rec = {key: r.get(key) for key in RECORD_FIELDS}
        rec["regime_flag"] = config.regime_flag
        rec["valid"] = valid
        rec["energy_drift"] = drift
        rec["dt"] = meta["dt"]
        out.append(rec)
    return out


def _cell_task(args):
    raw, n, seed = args
    return run_cell(SweepConfig.from_dict(raw), n, seed)


def _dumps(rec) -> str:
    return json.dumps(rec, ensure_ascii=False, allow_nan=True)


@dataclass
class SweepResult:
    records: list
    cell_meta: list
    jsonl_path: Path | None = None
    csv_path: Path | None = None

    @property
    def failed_cells(self):
        return [m for m in self.cell_meta if m.get("error")]


def run_sweep(config: SweepConfig, workers: int = 1, output: str | os.PathLike | None = None) -> SweepResult:
    """Run all cells; stream records to ``<output>/records.jsonl`` in cell order.

    Cell failures are recorded (with the exception class as error kind) and
    do not stop the sweep.
    """
    if workers < 1:
        raise ConfigError("workers must be at least 1")
    out_dir = output if output is not None else config.output
    cells = [(n, s) for n in config.N_list for s in config.seeds]
    jsonl_path = csv_path = None
    fh = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        jsonl_path = out_dir / "records.jsonl"
        csv_path = out_dir / "summary.csv"
        fh = open(jsonl_path, "w", encoding="utf-8")
    records, metas = [], []
    try:
        if workers == 1:
            results = (run_cell(config, n, s) for n, s in cells)
            pool = None
        else:
            pool = ProcessPoolExecutor(max_workers=workers)
            raw = config.as_dict()
            results = pool.map(_cell_task, [(raw, n, s) for n, s in cells])
        for (n, s), (recs, wall, meta) in zip(cells, results):
            err = next((r["error"] for r in recs if r.get("error")), None)
            metas.append({"N": n, "seed": s, "wall_time": wall, "error": err, **meta})
            records.extend(recs)
            if fh is not None:
                for r in recs:
                    fh.write(_dumps(r) + "\n")
                fh.flush()
        if pool is not None:
            pool.shutdown()
    finally:
        if fh is not None:
            fh.close()
    if csv_path is not None:
        write_summary_csv(csv_path, records, metas)
    return SweepResult(records, metas, jsonl_path, csv_path)


def write_summary_csv(path, records, metas):
    walls = {(m["N"], m["seed"]): m["wall_time"] for m in metas}
    gap_names = []
    for r in records:
        for name in r.get("gaps") or {}:
            if name not in gap_names:
                gap_names.append(name)
    scalar = [f for f in RECORD_FIELDS if f not in ("gaps", "error")]
    header = scalar + [f"gap[{g}]" for g in gap_names] + ["error_kind", "wall_time"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in records:
            gaps = r.get("gaps") or {}
            err = r.get("error") or {}
            w.writerow(
                [r.get(f) for f in scalar]
                + [gaps.get(g) for g in gap_names]
                + [err.get("kind"), walls.get((r["N"], r["seed"]))]
            )


def read_jsonl(path) -> list:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


@dataclass
class RateFit:
    quantity: str
    slope: float
    stderr: float
    intercept: float
    per_n: list
    excluded_cells: int


def sup_by_cell(records, quantity="total", valid_only=True):
    """sup over observation times of ``quantity`` for each (N, seed) cell."""
    cells: dict = {}
    bad = set()
    for r in records:
        key = (r["N"], r["seed"])
        if r.get("error") or (valid_only and r.get("valid") is False) or r.get(quantity) is None:
            bad.add(key)
            continue
        cells[key] = max(cells.get(key, -math.inf), float(r[quantity]))
    for key in bad:
        cells.pop(key, None)
    return cells, len(bad)


def seed_averaged_sup(records, quantity="total", valid_only=True):
    """``[(N, mean over seeds of sup_t quantity, seed count)]`` sorted by N."""
    cells, _ = sup_by_cell(records, quantity, valid_only)
    by_n: dict = {}
    for (n, _), v in cells.items():
        by_n.setdefault(n, []).append(v)
    return [(n, float(np.mean(v)), len(v)) for n, v in sorted(by_n.items())]


def fit_rate(records, quantity: str = "total", valid_only: bool = True) -> RateFit:
    """Log-log least squares of the seed-averaged sup_t quantity against N."""
    cells, excluded = sup_by_cell(records, quantity, valid_only)
    rows = seed_averaged_sup(records, quantity, valid_only)
    if len(rows) < 3:
        raise FitError(f"need at least three N with valid cells, have {len(rows)}")
    slope, err, icpt = loglog_fit([r[0] for r in rows], [r[1] for r in rows])
    per_n = [{"N": n, "mean_sup": v, "seeds": c} for n, v, c in rows]
    return RateFit(quantity, slope, err, icpt, per_n, excluded)


def _cell_series(records, quantity="total"):
    series: dict = {}
    for r in records:
        if r.get("error") or r.get(quantity) is None:
            continue
        series.setdefault((r["N"], r["seed"]), []).append((float(r["t"]), float(r[quantity])))
    return {k: sorted(v) for k, v in series.items()}


def gronwall_envelope_check(records, C: float, B: float, quantity: str = "total", rtol: float = 1e-12):
    """Per cell: does ``q(t) <= e^{C t} (q(0) + t B)`` hold at every observed t?

    Returns ``{(N, seed): (passed, worst_excess)}``; the excess is
    ``max_t q(t) - envelope(t)`` (negative when the bound holds with room).
    A relative slack of ``rtol`` absorbs roundoff at t = 0.
    """
    out = {}
    for key, pts in _cell_series(records, quantity).items():
        t = np.array([p[0] for p in pts])
        q = np.array([p[1] for p in pts])
        env = np.exp(C * t) * (q[0] + t * B)
        excess = q - env
        slack = rtol * np.maximum(np.abs(env), np.abs(q))
        out[key] = (bool(np.all(excess <= slack)), float(excess.max()))
    return out


def calibrate_envelope(records, quantity: str = "total", c_grid=None):
    """Smallest forcing B for each growth rate C on a grid; pick the tightest envelope.

    ``B(C) = max over cells and t > 0 of (q(t) e^{-Ct} - q(0)) / t``, clipped at
    zero.  The chosen pair minimises the mean envelope height at the final
    observation time across cells.
    """
    series = _cell_series(records, quantity)
    if not series:
        raise FitError("no usable cells for calibration")
    if c_grid is None:
        c_grid = np.linspace(0.0, 8.0, 81)
    best = None
    for C in c_grid:
        B = 0.0
        for pts in series.values():
            t = np.array([p[0] for p in pts])
            q = np.array([p[1] for p in pts])
            m = t > 0
            if m.any():
                B = max(B, float(np.max((q[m] * np.exp(-C * t[m]) - q[0]) / t[m])))
        height = np.mean(
            [math.exp(C * pts[-1][0]) * (pts[0][1] + pts[-1][0] * B) for pts in series.values()]
        )
        if best is None or height < best[2]:
            best = (float(C), B, float(height))
    return best[0], best[1]
