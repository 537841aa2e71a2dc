"""Monte-Carlo sweeps and their CSV / plot-data outputs.

Raw rows CSV columns (fixed order)::

    experiment,scheme,sweep_value,realization,iteration,sum_rate,weighted_sum_mse,seed,status

``iteration`` is empty except for convergence experiments, which emit one
row per iteration. Series files (one per scheme) have columns::

    x,n,mean_sum_rate,sum_rate_ci_low,sum_rate_ci_high,mean_wsmse,wsmse_ci_low,wsmse_ci_high

where ``x`` is the iteration (convergence) or the sweep value, and the CI
columns bound a two-sided 95% Student-t interval of the mean.
"""
from __future__ import annotations

import csv
import enum
import logging
import math
import os
import subprocess
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .channel import ScenarioConfig, dbm_to_watts, generate_channels
from .errors import InvalidScenario, NumericalFailure
from .orchestrator import Scheme, SolverSettings, overhead, run_algorithm1

__all__ = [
    "ExperimentKind",
    "Experiment",
    "ResultRow",
    "ROW_COLUMNS",
    "SERIES_COLUMNS",
    "OVERHEAD_COLUMNS",
    "default_sweep",
    "run_experiment",
    "aggregate",
    "write_rows_csv",
    "emit_plot_data",
    "overhead_table",
    "write_overhead_csv",
    "git_revision",
]

log = logging.getLogger(__name__)

ROW_COLUMNS = (
    "experiment", "scheme", "sweep_value", "realization", "iteration",
    "sum_rate", "weighted_sum_mse", "seed", "status",
)
SERIES_COLUMNS = (
    "x", "n", "mean_sum_rate", "sum_rate_ci_low", "sum_rate_ci_high",
    "mean_wsmse", "wsmse_ci_low", "wsmse_ci_high",
)
OVERHEAD_COLUMNS = (
    "scheme", "I_o", "backhaul_csi_symbols", "per_iteration_symbols", "total_symbols",
)


class ExperimentKind(str, enum.Enum):
    CONVERGENCE = "convergence"
    POWER_SWEEP = "power_sweep"
    RIS_ELEMENTS_SWEEP = "ris_elements_sweep"
    USER_SWEEP = "user_sweep"
    OVERHEAD_TABLE = "overhead_table"


_SWEEPS = {
    ExperimentKind.CONVERGENCE: ((0.0,), (0.0,)),
    ExperimentKind.POWER_SWEEP: ((-10.0, -5.0, 0.0, 5.0, 10.0), (-10.0, -5.0, 0.0, 5.0, 10.0)),
    ExperimentKind.RIS_ELEMENTS_SWEEP: ((16, 32, 64), (20, 40, 60, 80, 100)),
    ExperimentKind.USER_SWEEP: ((1, 2, 3, 4, 5, 6), (1, 2, 3, 4, 5, 6, 7, 8)),
    ExperimentKind.OVERHEAD_TABLE: ((0, 5, 10, 20, 30), (0, 5, 10, 20, 30)),
}


def default_sweep(kind, paper_scale=False) -> tuple:
    desk, paper = _SWEEPS[ExperimentKind(kind)]
    return paper if paper_scale else desk


@dataclass(frozen=True, eq=False)
class Experiment:
    kind: ExperimentKind
    sweep_values: tuple
    realizations: int
    schemes: tuple
    base_config: ScenarioConfig
    iterations: int = 20
    conv_tol: float = 1e-4
    settings: SolverSettings = field(default_factory=SolverSettings)

    def __post_init__(self):
        object.__setattr__(self, "kind", ExperimentKind(self.kind))
        object.__setattr__(self, "schemes", tuple(Scheme(s) for s in self.schemes))
        object.__setattr__(self, "sweep_values", tuple(self.sweep_values))
        if self.realizations < 1:
            raise ValueError("realizations must be >= 1")
        if not self.sweep_values:
            raise ValueError("sweep_values must be nonempty")
        if list(self.sweep_values) != sorted(self.sweep_values):
            raise ValueError("sweep_values must be sorted")
        if not self.schemes and self.kind is not ExperimentKind.OVERHEAD_TABLE:
            raise ValueError("at least one scheme is required")


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    scheme: str
    sweep_value: float
    realization: int
    iteration: int | None
    sum_rate: float
    weighted_sum_mse: float
    seed: int
    status: str = "ok"


def config_for(exp: Experiment, value) -> ScenarioConfig:
    """Base scenario with the swept parameter set to ``value``."""
    base = exp.base_config
    if exp.kind is ExperimentKind.POWER_SWEEP:
        return base.with_changes(p_max=dbm_to_watts(float(value)))
    if exp.kind is ExperimentKind.RIS_ELEMENTS_SWEEP:
        return base.with_changes(dims=base.dims.replace(M=int(value)))
    if exp.kind is ExperimentKind.USER_SWEEP:
        K = int(value)
        return base.with_changes(
            dims=base.dims.replace(K=K),
            noise_power=base.noise_power[0],
            weights=base.weights[0],
        )
    return base


def _run_task(task):
    exp, scheme, value, realization = task
    name = exp.kind.value
    seed = exp.base_config.seed
    convergence = exp.kind is ExperimentKind.CONVERGENCE
    try:
        cfg = config_for(exp, value)
        channels = generate_channels(cfg, realization)
        trace = run_algorithm1(
            cfg,
            channels,
            scheme,
            I_o_max=exp.iterations,
            conv_tol=0.0 if convergence else exp.conv_tol,
            settings=exp.settings,
        )
    except (NumericalFailure, InvalidScenario, np.linalg.LinAlgError) as exc:
        log.warning("%s/%s value=%s realization=%d failed: %s", name, scheme.value, value, realization, exc)
        return [ResultRow(name, scheme.value, float(value), realization, None,
                          math.nan, math.nan, seed, f"failed: {exc}")]
    if convergence:
        return [
            ResultRow(name, scheme.value, float(value), realization, i + 1,
                      rec.sum_rate, rec.weighted_sum_mse, seed)
            for i, rec in enumerate(trace.per_iteration)
        ]
    return [ResultRow(name, scheme.value, float(value), realization, None,
                      trace.final.sum_rate, trace.final.weighted_sum_mse, seed)]


def run_experiment(exp: Experiment, workers: int = 1) -> list:
    """Run every (scheme, sweep value, realization) combination.

    Rows come back in that nested order whatever the worker count. A failed
    run yields a single row flagged in ``status``; the sweep carries on.
    """
    if exp.kind is ExperimentKind.OVERHEAD_TABLE:
        raise ValueError("overhead tables are produced by overhead_table()")
    tasks = [
        (exp, scheme, value, r)
        for scheme in exp.schemes
        for value in exp.sweep_values
        for r in range(exp.realizations)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_task, tasks))
    else:
        chunks = [_run_task(t) for t in tasks]
    return [row for chunk in chunks for row in chunk]


def _mean_ci(values):
    values = np.asarray(values, dtype=float)
    n = values.size
    mean = float(values.mean())
    if n < 2:
        return mean, mean, mean
    half = float(stats.t.ppf(0.975, n - 1) * values.std(ddof=1) / np.sqrt(n))
    return mean, mean - half, mean + half


def aggregate(rows) -> dict:
    """Per-scheme series: ``{scheme: [dict(x=..., n=..., ...), ...]}``."""
    groups = {}
    for row in rows:
        if row.status != "ok":
            continue
        x = row.iteration if row.iteration is not None else row.sweep_value
        groups.setdefault(row.scheme, {}).setdefault(x, []).append(row)
    series = {}
    for scheme, by_x in groups.items():
        points = []
        for x in sorted(by_x):
            rs = by_x[x]
            rate = _mean_ci([r.sum_rate for r in rs])
            mse = _mean_ci([r.weighted_sum_mse for r in rs])
            points.append(dict(zip(SERIES_COLUMNS, (x, len(rs), *rate, *mse))))
        series[scheme] = points
    return series


def git_revision() -> str:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            cwd=os.path.dirname(os.path.abspath(__file__)),
            capture_output=True, text=True, timeout=5, check=True,
        )
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path, header, columns, records):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        for key, value in (header or {}).items():
            fh.write(f"# {key}: {value}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for rec in records:
            writer.writerow([_fmt(rec[c]) for c in columns])
    return path


def write_rows_csv(rows, path, header=None) -> Path:
    return _write_csv(path, header, ROW_COLUMNS, [r.__dict__ for r in rows])


def emit_plot_data(rows, out_dir, experiment=None, header=None) -> list:
    """Write one ``series_<experiment>_<scheme>.csv`` per scheme."""
    series = aggregate(rows)
    if experiment is None:
        experiment = rows[0].experiment if rows else "experiment"
    schemes = sorted({r.scheme for r in rows})
    paths = []
    for scheme in schemes:
        points = series.get(scheme)
        if not points:
            log.warning("no successful runs for scheme %s; series skipped", scheme)
            continue
        path = Path(out_dir) / f"series_{experiment}_{scheme}.csv"
        paths.append(_write_csv(path, header, SERIES_COLUMNS, points))
    return paths


def overhead_table(dims, iterations, schemes=(Scheme.DISTRIBUTED, Scheme.CENTRALIZED)) -> list:
    records = []
    for scheme in schemes:
        for I_o in iterations:
            rep = overhead(dims, int(I_o), scheme)
            records.append({
                "scheme": rep.scheme.value,
                "I_o": rep.I_o,
                "backhaul_csi_symbols": rep.backhaul_csi_symbols,
                "per_iteration_symbols": rep.per_iteration_symbols,
                "total_symbols": rep.total_symbols,
            })
    return records


def write_overhead_csv(records, path, header=None) -> Path:
    return _write_csv(path, header, OVERHEAD_COLUMNS, records)
