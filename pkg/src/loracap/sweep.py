"""Load sweeps over the analytic model and the simulator, and their
cross-validation.

Results are flat rows with a fixed CSV schema so downstream plotting scripts
can diff outputs byte for byte.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from .config import Scenario
from .errors import ConfigError
from .model import capacity, evaluate
from .simulator import SimConfig, SimReport
from .simulator import run as run_sim

CSV_HEADER = "lambda_fps,per_model,per_sim_mean,per_sim_ci95,capacity_fps,validity"


@dataclass(frozen=True)
class SweepRow:
    """One grid point; absent columns (model-only or sim-only runs) are NaN."""

    lambda_fps: float
    per_model: float
    per_sim_mean: float
    per_sim_ci95: float
    capacity_fps: float
    validity: bool


def _format(value: float) -> str:
    return f"{value:.9g}"


def write_csv(rows: list[SweepRow], fh) -> None:
    fh.write(CSV_HEADER + "\n")
    for r in rows:
        fh.write(
            ",".join(
                (
                    _format(r.lambda_fps),
                    _format(r.per_model),
                    _format(r.per_sim_mean),
                    _format(r.per_sim_ci95),
                    _format(r.capacity_fps),
                    "1" if r.validity else "0",
                )
            )
            + "\n"
        )


def read_csv(fh) -> list[SweepRow]:
    header = fh.readline().strip()
    if header != CSV_HEADER:
        raise ConfigError(f"unexpected sweep CSV header: {header!r}")
    rows = []
    for line in fh:
        if not line.strip():
            continue
        lam, pm, ps, ci, cap, valid = line.strip().split(",")
        rows.append(
            SweepRow(
                lambda_fps=float(lam),
                per_model=float(pm),
                per_sim_mean=float(ps),
                per_sim_ci95=float(ci),
                capacity_fps=float(cap),
                validity=valid == "1",
            )
        )
    return rows


def run_model_sweep(scenario: Scenario) -> list[SweepRow]:
    """Analytic PER at every grid point; simulator columns stay NaN."""
    cap = capacity(scenario.network)
    rows = []
    for lam in scenario.grid():
        report = evaluate(scenario.network_at(lam))
        rows.append(
            SweepRow(
                lambda_fps=lam,
                per_model=report.per,
                per_sim_mean=math.nan,
                per_sim_ci95=math.nan,
                capacity_fps=cap,
                validity=report.within_validity,
            )
        )
    return rows


def _simulate_one(config: SimConfig) -> SimReport:
    return run_sim(config)


def _aggregate(reports: list[SimReport]) -> tuple[float, float]:
    estimates = [r.per_estimate for r in reports if not r.no_attempts]
    if not estimates:
        return 0.0, 0.0
    mean = sum(estimates) / len(estimates)
    if len(estimates) >= 2:
        var = sum((p - mean) ** 2 for p in estimates) / (len(estimates) - 1)
        ci = 1.96 * math.sqrt(var / len(estimates))
    else:
        ci = reports[0].ci95_halfwidth
    return mean, ci


def run_sim_sweep(scenario: Scenario, jobs: int = 1, trace=None) -> list[SweepRow]:
    """Simulate every (grid point, seed) pair; rows keep the grid order.

    ``trace`` receives the per-event CSV stream of the first run only.
    """
    cap = capacity(scenario.network)
    grid = scenario.grid()
    configs = [
        (i, scenario.sim_config(lam, seed))
        for i, lam in enumerate(grid)
        for seed in scenario.seeds
    ]
    reports: dict[int, list[SimReport]] = {i: [] for i in range(len(grid))}
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for (i, _), report in zip(configs, pool.map(_simulate_one, [c for _, c in configs])):
                reports[i].append(report)
    else:
        for k, (i, config) in enumerate(configs):
            reports[i].append(run_sim(config, trace=trace if k == 0 else None))
    rows = []
    for i, lam in enumerate(grid):
        mean, ci = _aggregate(reports[i])
        rows.append(
            SweepRow(
                lambda_fps=lam,
                per_model=math.nan,
                per_sim_mean=mean,
                per_sim_ci95=ci,
                capacity_fps=cap,
                validity=lam <= cap,
            )
        )
    return rows


def merge_rows(model_rows: list[SweepRow], sim_rows: list[SweepRow]) -> list[SweepRow]:
    merged = []
    for m, s in zip(model_rows, sim_rows):
        merged.append(
            SweepRow(
                lambda_fps=m.lambda_fps,
                per_model=m.per_model,
                per_sim_mean=s.per_sim_mean,
                per_sim_ci95=s.per_sim_ci95,
                capacity_fps=m.capacity_fps,
                validity=m.validity,
            )
        )
    return merged


@dataclass(frozen=True)
class ValidationReport:
    """Model-vs-simulation agreement below the capacity bound."""

    passed: bool
    worst_gap: float
    worst_load_fps: float
    rows: tuple[SweepRow, ...]
    checked_points: int

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (
            f"{verdict}: worst |PER_model - PER_sim| = {self.worst_gap:.4f} "
            f"at load {self.worst_load_fps:.4g} fps over {self.checked_points} "
            f"grid points within validity"
        )


def validate(scenario: Scenario, tolerance_abs: float | None = None, jobs: int = 1) -> ValidationReport:
    """Check |PER_model - PER_sim| <= max(tolerance, 2*CI95) below capacity."""
    tol = scenario.tolerance_abs if tolerance_abs is None else tolerance_abs
    rows = merge_rows(run_model_sweep(scenario), run_sim_sweep(scenario, jobs=jobs))
    passed = True
    worst_gap, worst_load, checked = 0.0, math.nan, 0
    for row in rows:
        if not row.validity:
            continue
        checked += 1
        gap = abs(row.per_model - row.per_sim_mean)
        if gap > worst_gap:
            worst_gap, worst_load = gap, row.lambda_fps
        if gap > max(tol, 2.0 * row.per_sim_ci95):
            passed = False
    return ValidationReport(
        passed=passed,
        worst_gap=worst_gap,
        worst_load_fps=worst_load,
        rows=tuple(rows),
        checked_points=checked,
    )
