"""Battery dispatch optimization and billing under TOU, demand and CPP rate structures."""

from .bess import BessSpec, bess_from_config, load_bess
from .billing import CostBreakdown, SavingsReport, evaluate_cost, peak_demand, savings
from .formulation import DayProblem, DailySolution, ExportMode, build_daily_lp, extract_solution
from .scheduler import CppAuto, MonthlyResult, compare_tariffs, optimize_month, run_month
from .solver import LpProblem, LpSolution, LpStatus, solve_lp
from .tariff import (
    DayKind,
    Period,
    PeriodCalendar,
    RateType,
    Tariff,
    build_daily_rates,
    build_monthly_rates,
    load_tariff,
    select_cpp_days,
    tariff_from_config,
)
from .timeseries import IntervalSeries, parse_csv, resample_to_15min

__version__ = "0.1.0"

__all__ = [
    "BessSpec", "bess_from_config", "load_bess",
    "CostBreakdown", "SavingsReport", "evaluate_cost", "peak_demand", "savings",
    "DayProblem", "DailySolution", "ExportMode", "build_daily_lp", "extract_solution",
    "CppAuto", "MonthlyResult", "compare_tariffs", "optimize_month", "run_month",
    "LpProblem", "LpSolution", "LpStatus", "solve_lp",
    "DayKind", "Period", "PeriodCalendar", "RateType", "Tariff", "build_daily_rates",
    "build_monthly_rates", "load_tariff", "select_cpp_days", "tariff_from_config",
    "IntervalSeries", "parse_csv", "resample_to_15min",
]
