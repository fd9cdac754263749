"""Rate-history projection, savings/charge correlation and load statistics."""

from __future__ import annotations

import csv
import math
import os
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bess import BessSpec
from .billing import SavingsReport
from .scheduler import run_month
from .tariff import Tariff
from .timeseries import IntervalSeries


class AnalysisError(ValueError):
    pass


@dataclass(frozen=True)
class RateHistory:
    years: list[int]
    series: dict[str, list[float]]

    def __post_init__(self):
        if list(self.years) != sorted(set(self.years)):
            raise AnalysisError("years must be strictly increasing")
        for name, values in self.series.items():
            if len(values) != len(self.years):
                raise AnalysisError(f"series {name!r} has {len(values)} values for {len(self.years)} years")
            if any(not math.isfinite(v) or v < 0 for v in values):
                raise AnalysisError(f"series {name!r} has negative or non-finite values")


def load_rate_history(path: str | os.PathLike) -> RateHistory:
    """Read a ``year,charge_name,value`` CSV; every charge must cover every year."""
    if not os.path.exists(path):
        raise AnalysisError(f"no such history file: {path}")
    table: dict[str, dict[int, float]] = defaultdict(dict)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"year", "charge_name", "value"} <= set(reader.fieldnames):
            raise AnalysisError(f"{path}: header must be year,charge_name,value")
        for row, rec in enumerate(reader, start=1):
            try:
                year, value = int(rec["year"]), float(rec["value"])
            except (TypeError, ValueError):
                raise AnalysisError(f"row {row}: bad year or value") from None
            name = rec["charge_name"].strip()
            if year in table[name]:
                raise AnalysisError(f"row {row}: duplicate {name!r} for {year}")
            table[name][year] = value
    years = sorted({y for by_year in table.values() for y in by_year})
    for name, by_year in table.items():
        missing = [y for y in years if y not in by_year]
        if missing:
            raise AnalysisError(f"charge {name!r} has no value for years {missing}")
    return RateHistory(years, {name: [by_year[y] for y in years] for name, by_year in sorted(table.items())})


@dataclass(frozen=True)
class QuadraticFit:
    """``value = a * i**2 + b * i + c`` with ``i`` the 0-based year index."""

    a: float
    b: float
    c: float
    residual: float
    projected: list[float]
    floored: bool = False

    @property
    def coefficients(self) -> tuple[float, float, float]:
        return self.a, self.b, self.c

    def __call__(self, i):
        return self.a * np.square(i) + self.b * np.asarray(i) + self.c


def fit_quadratic(values: Sequence[float], horizon: int = 0) -> QuadraticFit:
    y = np.asarray(values, dtype=float)
    if y.size < 3:
        raise AnalysisError(f"a quadratic fit needs at least 3 points, got {y.size}")
    if horizon < 0:
        raise AnalysisError("horizon must be >= 0")
    i = np.arange(y.size, dtype=float)
    V = np.column_stack([i * i, i, np.ones_like(i)])
    coef, _, rank, _ = np.linalg.lstsq(V, y, rcond=None)
    if rank < 3:
        raise AnalysisError("rank-deficient quadratic fit")
    resid = float(np.sqrt(np.sum((V @ coef - y) ** 2)))
    a, b, c = (float(v) for v in coef)
    ahead = np.arange(y.size, y.size + horizon, dtype=float)
    proj = a * ahead ** 2 + b * ahead + c
    floored = bool(np.any(proj < 0))
    if floored:
        warnings.warn("quadratic projection went negative; floored at 0", stacklevel=2)
    return QuadraticFit(a, b, c, resid, [float(v) for v in np.maximum(proj, 0.0)], floored)


def quadratic_fit_project(h: RateHistory, horizon: int) -> dict[str, QuadraticFit]:
    return {name: fit_quadratic(values, horizon) for name, values in h.series.items()}


def _flat(v: np.ndarray, ss: float) -> bool:
    # spread at round-off level (e.g. a projected constant) counts as no spread
    return ss <= v.size * (1e-12 * float(np.abs(v).max())) ** 2


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise AnalysisError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise AnalysisError(f"correlation needs at least 2 points, got {x.size}")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if _flat(x, sxx) or _flat(y, syy):
        raise AnalysisError("correlation undefined: zero variance")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def load_factor(s: IntervalSeries | Sequence[float]) -> float:
    values = s.values if isinstance(s, IntervalSeries) else np.asarray(s, dtype=float)
    if values.size == 0:
        raise AnalysisError("load factor of an empty series")
    peak = float(values.max())
    if peak <= 0:
        raise AnalysisError("load factor undefined: peak load is 0")
    return float(values.mean()) / peak


@dataclass(frozen=True)
class YearRun:
    year: int
    projected: bool
    charges: dict[str, float]
    report: SavingsReport


@dataclass(frozen=True)
class Correlation:
    savings: str
    charge: str
    n: int
    r: float | None
    note: str = ""


@dataclass
class SensitivityResult:
    runs: list[YearRun]
    correlations: list[Correlation]
    fits: dict[str, QuadraticFit] = field(default_factory=dict)

    def savings_series(self, which: str) -> list[float]:
        return [getattr(run.report, which) for run in self.runs]

    def correlation(self, savings: str, charge: str) -> Correlation:
        for c in self.correlations:
            if c.savings == savings and c.charge == charge:
                return c
        raise KeyError((savings, charge))


def sensitivity_sweep(
    load: IntervalSeries,
    solar: IntervalSeries | None,
    bess: BessSpec,
    base_tariff: Tariff,
    h: RateHistory,
    horizon: int = 0,
    **run_kwargs,
) -> SensitivityResult:
    """Re-optimize the month for each historical and projected year's charges."""
    needed = set(base_tariff.charges())
    missing = needed - set(h.series)
    if missing:
        raise AnalysisError(f"history lacks charges used by the tariff: {sorted(missing)}")
    names = sorted(needed)
    fits = quadratic_fit_project(h, horizon) if horizon else {}

    plan: list[tuple[int, bool, dict[str, float]]] = []
    for k, year in enumerate(h.years):
        plan.append((year, False, {n: h.series[n][k] for n in names}))
    for k in range(horizon):
        plan.append((h.years[-1] + k + 1, True, {n: fits[n].projected[k] for n in names}))

    runs = []
    for year, projected, charges in plan:
        result = run_month(load, solar, base_tariff.with_rates(**charges), bess, **run_kwargs)
        runs.append(YearRun(year, projected, charges, result.savings))

    correlations = []
    for which in ("savings_1", "savings_2"):
        s = [getattr(run.report, which) for run in runs]
        for name in names:
            x = [run.charges[name] for run in runs]
            try:
                correlations.append(Correlation(which, name, len(runs), pearson(s, x)))
            except AnalysisError as exc:
                correlations.append(Correlation(which, name, len(runs), None, str(exc)))
    return SensitivityResult(runs, correlations, fits)


def write_sweep_csv(result: SensitivityResult, path: str | os.PathLike) -> None:
    names = sorted(result.runs[0].charges) if result.runs else []
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["year", "projected", *names, "bill_load_only", "bill_with_solar",
                    "bill_optimized", "savings_1", "savings_2"])
        for run in result.runs:
            r = run.report
            w.writerow([run.year, int(run.projected), *(repr(run.charges[n]) for n in names),
                        repr(r.bill_load_only.total), repr(r.bill_with_solar.total),
                        repr(r.bill_optimized.total), repr(r.savings_1), repr(r.savings_2)])


def write_correlation_csv(result: SensitivityResult, path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["savings", "charge", "n", "pearson_r", "note"])
        for c in result.correlations:
            w.writerow([c.savings, c.charge, c.n, "" if c.r is None else repr(c.r), c.note])


def write_projection_csv(h: RateHistory, fits: dict[str, QuadraticFit], path: str | os.PathLike) -> None:
    """Long-format ``year,charge_name,value,projected`` table, history then projections."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["year", "charge_name", "value", "projected"])
        for name in sorted(h.series):
            for year, v in zip(h.years, h.series[name]):
                w.writerow([year, name, repr(float(v)), 0])
            for k, v in enumerate(fits[name].projected):
                w.writerow([h.years[-1] + k + 1, name, repr(float(v)), 1])
