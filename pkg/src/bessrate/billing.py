"""Cost functions for rate types A-F, monthly bills and the two-stage savings split."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime
from typing import Sequence, Union

import numpy as np

from .tariff import DailyRates, MonthlyRates, Period

Rates = Union[DailyRates, MonthlyRates]


class BillingError(ValueError):
    pass


@dataclass(frozen=True)
class CostBreakdown:
    energy_cost: float
    tr_demand_costs: dict[Period, float]
    monthly_demand_cost: float
    total: float
    # interval index that sets each demand term, and the kW drawn there
    tr_peaks: dict[Period, tuple[int, float]] = field(default_factory=dict)
    monthly_peak: tuple[int, float] | None = None

    @property
    def demand_cost(self) -> float:
        return sum(self.tr_demand_costs.values()) + self.monthly_demand_cost

    def to_dict(self, timestamps: Sequence[datetime] | None = None) -> dict:
        def _peak(peak):
            idx, kw = peak
            d = {"interval": idx, "kw": kw}
            if timestamps is not None:
                d["timestamp"] = timestamps[idx].strftime("%Y-%m-%dT%H:%M")
            return d

        out = {
            "energy_cost": self.energy_cost,
            "tr_demand_costs": {p.value: v for p, v in self.tr_demand_costs.items()},
            "monthly_demand_cost": self.monthly_demand_cost,
            "total": self.total,
            "tr_peaks": {p.value: _peak(v) for p, v in self.tr_peaks.items()},
        }
        if self.monthly_peak is not None:
            out["monthly_peak"] = _peak(self.monthly_peak)
        return out


@dataclass(frozen=True)
class SavingsReport:
    bill_load_only: CostBreakdown
    bill_with_solar: CostBreakdown
    bill_optimized: CostBreakdown
    savings_1: float
    savings_2: float

    def to_dict(self, timestamps: Sequence[datetime] | None = None) -> dict:
        return {
            "bill_load_only": self.bill_load_only.to_dict(timestamps),
            "bill_with_solar": self.bill_with_solar.to_dict(timestamps),
            "bill_optimized": self.bill_optimized.to_dict(timestamps),
            "savings_1": self.savings_1,
            "savings_2": self.savings_2,
        }


def peak_demand(p) -> float:
    p = np.asarray(p, dtype=float)
    if p.size == 0:
        raise BillingError("peak of an empty vector")
    return float(p.max())


def evaluate_cost(p, rates: Rates, dt: float) -> CostBreakdown:
    """Bill ``p`` (kW per interval) against daily or monthly rate vectors.

    Each demand term is the max of the full product vector, so intervals outside
    a period contribute their zero product.
    """
    p = np.asarray(p, dtype=float)
    if p.shape != rates.alpha.shape:
        raise BillingError(f"power vector has {p.size} intervals, rates have {rates.alpha.size}")
    energy = float(dt * np.dot(rates.alpha, p))
    tr_costs, tr_peaks = {}, {}
    for period, diag in rates.demand_diagonals.items():
        products = diag * p
        k = int(np.argmax(products))
        tr_costs[period] = float(products[k])
        tr_peaks[period] = (k, float(p[k]))
    monthly = 0.0
    monthly_peak = None
    if rates.monthly_beta:
        k = int(np.argmax(p))
        monthly = float(rates.monthly_beta * p[k])
        monthly_peak = (k, float(p[k]))
    total = energy + sum(tr_costs.values()) + monthly
    return CostBreakdown(energy, tr_costs, monthly, total, tr_peaks, monthly_peak)


def savings(load, solar, grid, rates: Rates, dt: float, floor_with_solar: bool = True) -> SavingsReport:
    """Bills for load alone, load net of solar, and optimized grid draw.

    With ``floor_with_solar`` (no-export operation) surplus solar in the net-load
    vector is treated as curtailed rather than exported.
    """
    load, solar, grid = (np.asarray(v, dtype=float) for v in (load, solar, grid))
    if not load.shape == solar.shape == grid.shape:
        raise BillingError(f"length mismatch: load {load.size}, solar {solar.size}, grid {grid.size}")
    net = load - solar
    if floor_with_solar:
        net = np.maximum(net, 0.0)
    b0 = evaluate_cost(load, rates, dt)
    b1 = evaluate_cost(net, rates, dt)
    b2 = evaluate_cost(grid, rates, dt)
    return SavingsReport(b0, b1, b2, b0.total - b1.total, b1.total - b2.total)


def format_bill(b: CostBreakdown, title: str = "Bill", timestamps: Sequence[datetime] | None = None) -> str:
    def _when(idx):
        return timestamps[idx].strftime("%Y-%m-%d %H:%M") if timestamps is not None else f"#{idx}"

    lines = [title, "-" * 52, f"{'Energy charge':<30}{b.energy_cost:>20,.2f}"]
    for period, cost in b.tr_demand_costs.items():
        idx, kw = b.tr_peaks[period]
        lines.append(f"{period.label + ' demand':<30}{cost:>20,.2f}")
        lines.append(f"    peak {kw:,.2f} kW at {_when(idx)}")
    if b.monthly_peak is not None:
        idx, kw = b.monthly_peak
        lines.append(f"{'Monthly peak demand':<30}{b.monthly_demand_cost:>20,.2f}")
        lines.append(f"    peak {kw:,.2f} kW at {_when(idx)}")
    lines.append("-" * 52)
    lines.append(f"{'Total':<30}{b.total:>20,.2f}")
    return "\n".join(lines)


def format_savings(r: SavingsReport) -> str:
    rows = [
        ("Load only", r.bill_load_only.total),
        ("With solar", r.bill_with_solar.total),
        ("Optimized (solar + BESS)", r.bill_optimized.total),
        ("Savings 1 (solar)", r.savings_1),
        ("Savings 2 (BESS)", r.savings_2),
    ]
    return "\n".join(f"{name:<30}{value:>20,.2f}" for name, value in rows)


def dumps(obj: dict) -> str:
    return json.dumps(obj, indent=2, sort_keys=False)
