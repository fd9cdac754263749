"""Day-by-day optimization over a billing month.

Each day's LP starts from the previous day's final stored energy. Month vectors
are concatenated in day order and billed once against the month's rates.
"""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Callable, Iterable, Sequence

import numpy as np

from . import bess as bess_mod
from .bess import BessSpec
from .billing import SavingsReport, savings
from .formulation import (
    ConsistencyError,
    DailySolution,
    DayProblem,
    ExportMode,
    build_daily_lp,
    check_complementarity,
    epigraph_gaps,
    extract_solution,
    feasibility_residuals,
    repair_complementarity,
)
from .solver import LpProblem, solve_lp
from .tariff import DayKind, MonthlyRates, Tariff, build_daily_rates, build_monthly_rates, day_kinds_for, select_cpp_days
from .timeseries import TIMESTAMP_FORMAT, IntervalSeries, SeriesError

log = logging.getLogger(__name__)

COMPLEMENTARITY_TOL = 1e-6
FEASIBILITY_RTOL = 1e-6
EPIGRAPH_TOL = 1e-6


class ScheduleError(RuntimeError):
    pass


@dataclass(frozen=True)
class CppAuto:
    """Pick the ``k`` highest-peak days of the month as CPP event days."""

    k: int = 3


@dataclass(frozen=True)
class DayAudit:
    day: int
    day_kind: DayKind
    status: str
    iterations: int
    complementarity_violations: int
    max_simultaneous_kw: float
    repaired: bool
    max_residual: float
    max_epigraph_gap: float


@dataclass
class MonthlyResult:
    p_grid_month: np.ndarray
    p_load_month: np.ndarray
    p_solar_month: np.ndarray
    daily_solutions: list[DailySolution]
    savings: SavingsReport
    audit: list[DayAudit]
    rates: MonthlyRates
    cpp_days: list[int]
    dt: float
    start: datetime | None = None
    step_minutes: int | None = None
    tariff_name: str = ""
    export_mode: ExportMode = ExportMode.NO_EXPORT

    @property
    def days(self) -> int:
        return len(self.daily_solutions)

    def timestamps(self) -> list[datetime] | None:
        if self.start is None:
            return None
        step = timedelta(minutes=self.step_minutes)
        return [self.start + i * step for i in range(self.p_grid_month.size)]

    def month_vector(self, attr: str) -> np.ndarray:
        return np.concatenate([getattr(s, attr) for s in self.daily_solutions])

    def soc_month(self) -> np.ndarray:
        """Stored energy at the start of every interval."""
        return np.concatenate([s.e_traj[:-1] for s in self.daily_solutions])

    def summary(self) -> dict:
        return {
            "tariff": self.tariff_name,
            "days": self.days,
            "export_mode": self.export_mode.value,
            "cpp_days": self.cpp_days,
            "savings": self.savings.to_dict(self.timestamps()),
            "daily_objectives": [s.objective for s in self.daily_solutions],
            "final_energy_kwh": float(self.daily_solutions[-1].e_traj[-1]) if self.daily_solutions else None,
            "audit": [
                {
                    "day": a.day, "day_kind": a.day_kind.value, "status": a.status,
                    "complementarity_violations": a.complementarity_violations,
                    "max_simultaneous_kw": a.max_simultaneous_kw, "repaired": a.repaired,
                    "max_residual": a.max_residual, "max_epigraph_gap": a.max_epigraph_gap,
                }
                for a in self.audit
            ],
        }


def resolve_cpp_days(
    tariff: Tariff, load: np.ndarray, T: int, cpp_days: Iterable[int] | CppAuto | None
) -> list[int]:
    if not tariff.cpp_active:
        return []
    if cpp_days is None:
        cpp_days = sorted(tariff.cpp.event_days) if tariff.cpp.event_days else CppAuto()
    if isinstance(cpp_days, CppAuto):
        return select_cpp_days(load, cpp_days.k, T)
    return sorted(set(int(d) for d in cpp_days))


def solve_day(
    problem: DayProblem,
    method: str = "highs",
    lp_sink: Callable[[LpProblem], None] | None = None,
) -> tuple[DailySolution, dict]:
    """Build, solve and audit one day. Returns the solution and audit facts."""
    lp, idx = build_daily_lp(problem)
    if lp_sink is not None:
        lp_sink(lp)
    sol = solve_lp(lp, method=method)
    if not sol.optimal:
        raise ScheduleError(f"LP status {sol.status.value}: {sol.message}")
    day = extract_solution(sol, idx, problem)
    gaps = epigraph_gaps(day, problem)
    gap = max(gaps.values(), default=0.0)
    if gap > EPIGRAPH_TOL:
        name = max(gaps, key=gaps.get)
        raise ConsistencyError(f"epigraph scalar for {name} differs from its max by {gap:.3g}")
    violations = check_complementarity(day, COMPLEMENTARITY_TOL)
    repaired = False
    if violations:
        day = repair_complementarity(day, problem)
        repaired = True
    residuals = feasibility_residuals(day, problem)
    worst = max(residuals.values())
    scale = max(1.0, float(problem.load.max(initial=0.0)), float(problem.solar.max(initial=0.0)))
    if worst > FEASIBILITY_RTOL * scale:
        name = max(residuals, key=residuals.get)
        raise ConsistencyError(f"dispatch violates {name} by {worst:.3g}")
    facts = {
        "status": sol.status.value,
        "iterations": sol.iterations,
        "complementarity_violations": len(violations),
        "max_simultaneous_kw": max((v for _, v in violations), default=0.0),
        "repaired": repaired,
        "max_residual": worst,
        "max_epigraph_gap": gap,
    }
    return day, facts


def optimize_month(
    load: np.ndarray,
    solar: np.ndarray,
    tariff: Tariff,
    bess: BessSpec,
    *,
    dt: float,
    cpp_days: Iterable[int] | CppAuto | None = None,
    weekdays: Sequence[int] | None = None,
    export_mode: ExportMode | str = ExportMode.NO_EXPORT,
    terminal_soc_frac: float | None = None,
    method: str = "highs",
    lp_sink: Callable[[int, LpProblem], None] | None = None,
) -> MonthlyResult:
    """Run the daily optimization over flat month arrays with ``tariff.T`` intervals per day."""
    export_mode = ExportMode(export_mode)
    bess_mod.check(bess)
    load = np.asarray(load, dtype=float)
    solar = np.asarray(solar, dtype=float)
    T = tariff.T
    if load.shape != solar.shape:
        raise ScheduleError(f"load has {load.size} intervals but solar has {solar.size}")
    if load.size == 0 or load.size % T:
        raise ScheduleError(f"{load.size} intervals is not a whole number of {T}-interval days")
    D = load.size // T
    if weekdays is not None and len(weekdays) != D:
        raise ScheduleError(f"got {len(weekdays)} weekdays for {D} days")

    events = resolve_cpp_days(tariff, load, T, cpp_days)
    kinds = day_kinds_for(tariff, D, events)
    wd = list(weekdays) if weekdays is not None else [None] * D

    e_init = bess.e_init
    days: list[DailySolution] = []
    audit: list[DayAudit] = []
    for d in range(D):
        sl = slice(d * T, (d + 1) * T)
        problem = DayProblem(
            load=load[sl], solar=solar[sl], rates=build_daily_rates(tariff, kinds[d], wd[d]),
            bess=bess, e_init=e_init, dt=dt, export_mode=export_mode,
            terminal_soc_frac=terminal_soc_frac,
        )
        sink = (lambda lp, d=d: lp_sink(d, lp)) if lp_sink is not None else None
        try:
            day, facts = solve_day(problem, method=method, lp_sink=sink)
        except ScheduleError as exc:
            raise ScheduleError(f"day {d}: {exc}") from None
        if facts["complementarity_violations"]:
            log.info("day %d: netted simultaneous charge/discharge in %d intervals (max %.3g kW)",
                     d, facts["complementarity_violations"], facts["max_simultaneous_kw"])
        days.append(day)
        audit.append(DayAudit(day=d, day_kind=kinds[d], **facts))
        e_init = float(day.e_traj[-1])

    rates = build_monthly_rates(tariff, D, kinds, wd if weekdays is not None else None)
    grid = np.concatenate([s.p_grid for s in days])
    report = savings(load, solar, grid, rates, dt, floor_with_solar=export_mode is ExportMode.NO_EXPORT)
    return MonthlyResult(
        p_grid_month=grid, p_load_month=load.copy(), p_solar_month=solar.copy(),
        daily_solutions=days, savings=report, audit=audit, rates=rates, cpp_days=events,
        dt=dt, tariff_name=tariff.name, export_mode=export_mode,
    )


def run_month(
    load: IntervalSeries,
    solar: IntervalSeries | None,
    tariff: Tariff,
    bess: BessSpec,
    cpp_days: Iterable[int] | CppAuto | None = None,
    **kwargs,
) -> MonthlyResult:
    """Optimize a month of interval data; ``solar=None`` means no solar."""
    load.require_whole_days()
    if load.intervals_per_day != tariff.T:
        raise ScheduleError(
            f"data has {load.intervals_per_day} intervals per day but the tariff calendar has {tariff.T}")
    if solar is None:
        solar_values = np.zeros(len(load))
    else:
        if solar.start != load.start or solar.step_minutes != load.step_minutes or len(solar) != len(load):
            raise SeriesError("solar and load series must cover the same intervals")
        solar_values = solar.values
    result = optimize_month(
        load.values, solar_values, tariff, bess, dt=load.step_hours, cpp_days=cpp_days,
        weekdays=load.weekdays() if tariff.weekday_calendars else None, **kwargs,
    )
    result.start = load.start
    result.step_minutes = load.step_minutes
    return result


@dataclass(frozen=True)
class RankedTariff:
    rank: int
    tariff: Tariff
    result: MonthlyResult

    @property
    def name(self) -> str:
        return self.tariff.name or f"type {self.tariff.rate_type.value}"

    def row(self) -> dict:
        s = self.result.savings
        return {
            "rank": self.rank,
            "tariff": self.name,
            "rate_type": self.tariff.rate_type.value,
            "bill_load_only": s.bill_load_only.total,
            "bill_with_solar": s.bill_with_solar.total,
            "bill_optimized": s.bill_optimized.total,
            "savings_1": s.savings_1,
            "savings_2": s.savings_2,
        }


def compare_tariffs(
    load: IntervalSeries,
    solar: IntervalSeries | None,
    bess: BessSpec,
    tariffs: Sequence[Tariff],
    **kwargs,
) -> list[RankedTariff]:
    """Rank tariffs by optimized monthly bill; equal bills keep input order."""
    if not tariffs:
        raise ScheduleError("compare needs at least one tariff")
    results = [(t, run_month(load, solar, t, bess, **kwargs)) for t in tariffs]
    order = sorted(range(len(results)), key=lambda i: results[i][1].savings.bill_optimized.total)
    return [RankedTariff(rank + 1, *results[i]) for rank, i in enumerate(order)]


DISPATCH_COLUMNS = [
    "timestamp", "load_kw", "solar_kw", "grid_kw", "solar_to_load_kw", "solar_to_bess_kw",
    "charge_kw", "discharge_kw", "soc_kwh", "curtail_kw",
]


def write_dispatch_csv(result: MonthlyResult, path: str | os.PathLike) -> None:
    """Per-interval dispatch; ``soc_kwh`` is the stored energy at interval end."""
    stamps = result.timestamps()
    cols = [
        result.p_load_month, result.p_solar_month, result.p_grid_month,
        result.month_vector("p_solar_to_load"), result.month_vector("p_solar_to_bess"),
        result.month_vector("p_charge"), result.month_vector("p_discharge"),
        np.concatenate([s.e_traj[1:] for s in result.daily_solutions]),
        result.month_vector("p_curtail"),
    ]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DISPATCH_COLUMNS)
        for i in range(result.p_grid_month.size):
            ts = stamps[i].strftime(TIMESTAMP_FORMAT) if stamps else str(i)
            w.writerow([ts] + [repr(float(c[i])) for c in cols])
