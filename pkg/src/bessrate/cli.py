"""Command-line entry point: ``bessrate <command> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import shutil
import sys
import tempfile
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import analysis, billing, plotting
from .bess import BessError, BessSpec, check as check_bess, load_bess
from .formulation import ConsistencyError, ExportMode, FormulationError
from .solver import dump_lp
from .scheduler import CppAuto, ScheduleError, compare_tariffs, run_month, write_dispatch_csv
from .tariff import TariffError, build_monthly_rates, day_kinds_for, load_tariff, select_cpp_days
from .timeseries import IntervalSeries, SeriesError, parse_csv, resample_to_15min, zeros_like

log = logging.getLogger("bessrate")

USER_ERRORS = (SeriesError, TariffError, BessError, FormulationError, ScheduleError,
               ConsistencyError, analysis.AnalysisError, billing.BillingError)


class CliError(Exception):
    pass


@dataclass
class RunConfig:
    load: IntervalSeries
    solar: IntervalSeries | None
    tariffs: list
    bess: BessSpec
    export_mode: ExportMode
    cpp_days: list[int] | CppAuto | None
    out: str | None
    dump_lp: bool = False
    terminal_soc: float | None = None
    plot: bool = False


def _read_series(path: str, column: str = "kw") -> IntervalSeries:
    s = parse_csv(path, column)
    return resample_to_15min(s) if s.step_minutes < 15 else s


def _cpp_arg(args) -> list[int] | CppAuto | None:
    if getattr(args, "cpp_days", None) and getattr(args, "cpp_auto", None) is not None:
        raise CliError("--cpp-days and --cpp-auto are mutually exclusive")
    if getattr(args, "cpp_days", None):
        try:
            return [int(d) for d in args.cpp_days.split(",") if d.strip()]
        except ValueError:
            raise CliError(f"--cpp-days expects comma-separated day indices, got {args.cpp_days!r}") from None
    if getattr(args, "cpp_auto", None) is not None:
        return CppAuto(args.cpp_auto)
    return None


def _config(args, need_bess: bool = True) -> RunConfig:
    load = _read_series(args.load)
    if args.solar:
        solar = _read_series(args.solar)
    elif args.no_solar:
        solar = None
    else:
        raise CliError("--solar is required unless --no-solar is given")
    tariffs = [load_tariff(p) for p in (args.tariff if isinstance(args.tariff, list) else [args.tariff])]
    if need_bess and getattr(args, "bess", None):
        bess = check_bess(load_bess(args.bess))
    else:
        bess = BessSpec.none()
    terminal = getattr(args, "terminal_soc", None)
    if terminal is not None and not 0 <= terminal <= 1:
        raise CliError("--terminal-soc must be a fraction in [0, 1]")
    return RunConfig(
        load=load, solar=solar, tariffs=tariffs, bess=bess,
        export_mode=ExportMode.parse(args.export_mode), cpp_days=_cpp_arg(args),
        out=getattr(args, "out", None), dump_lp=getattr(args, "dump_lp", False),
        terminal_soc=terminal, plot=getattr(args, "plot", False),
    )


class _Staging:
    """Collect outputs in a temp dir and move them into place only on success."""

    def __init__(self, out: str):
        self.out = os.path.abspath(out)
        parent = os.path.dirname(self.out)
        os.makedirs(parent, exist_ok=True)
        self.tmp = tempfile.mkdtemp(prefix=".bessrate-", dir=parent)

    def path(self, name: str) -> str:
        full = os.path.join(self.tmp, name)
        os.makedirs(os.path.dirname(full), exist_ok=True)
        return full

    def commit(self) -> None:
        if not os.path.exists(self.out):
            os.rename(self.tmp, self.out)
            return
        for root, _, files in os.walk(self.tmp):
            rel = os.path.relpath(root, self.tmp)
            os.makedirs(os.path.join(self.out, rel), exist_ok=True)
            for f in files:
                os.replace(os.path.join(root, f), os.path.join(self.out, rel, f))
        shutil.rmtree(self.tmp, ignore_errors=True)

    def abort(self) -> None:
        shutil.rmtree(self.tmp, ignore_errors=True)


def _write_json(path: str, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def _staged(out: str, write) -> None:
    stage = _Staging(out)
    try:
        write(stage)
    except BaseException:
        stage.abort()
        raise
    stage.commit()


# -- commands ------------------------------------------------------------

def cmd_optimize(args) -> int:
    cfg = _config(args)
    if not cfg.out:
        raise CliError("--out is required")
    tariff = cfg.tariffs[0]
    lps: list[tuple[int, str]] = []
    sink = (lambda d, lp: lps.append((d, dump_lp(lp)))) if cfg.dump_lp else None
    result = run_month(cfg.load, cfg.solar, tariff, cfg.bess, cpp_days=cfg.cpp_days,
                       export_mode=cfg.export_mode, terminal_soc_frac=cfg.terminal_soc, lp_sink=sink)
    stamps = result.timestamps()

    def write(stage):
        write_dispatch_csv(result, stage.path("dispatch.csv"))
        _write_json(stage.path("bill.json"), result.savings.bill_optimized.to_dict(stamps))
        _write_json(stage.path("summary.json"), result.summary())
        with open(stage.path("bill.txt"), "w") as fh:
            fh.write(_bill_text(result.savings, stamps) + "\n")
        for d, text in lps:
            with open(stage.path(os.path.join("lp", f"day_{d:02d}.lp")), "w") as fh:
                fh.write(text)
        if cfg.plot:
            plotting.plot_dispatch(result, stage.path("dispatch.png"))

    _staged(cfg.out, write)
    print(billing.format_savings(result.savings))
    repaired = sum(a.repaired for a in result.audit)
    if repaired:
        print(f"note: simultaneous charge/discharge netted on {repaired} day(s); see summary.json")
    print(f"wrote {cfg.out}")
    return 0


def _bill_text(report: billing.SavingsReport, stamps) -> str:
    parts = [
        billing.format_bill(report.bill_load_only, "Bill: load only", stamps),
        billing.format_bill(report.bill_with_solar, "Bill: with solar", stamps),
        billing.format_bill(report.bill_optimized, "Bill: optimized (solar + BESS)", stamps),
        billing.format_savings(report),
    ]
    return "\n\n".join(parts)


def _month_rates(cfg: RunConfig):
    tariff = cfg.tariffs[0]
    D = cfg.load.require_whole_days()
    if cfg.load.intervals_per_day != tariff.T:
        raise CliError(f"data has {cfg.load.intervals_per_day} intervals per day, tariff has {tariff.T}")
    from .scheduler import resolve_cpp_days
    events = resolve_cpp_days(tariff, cfg.load.values, tariff.T, cfg.cpp_days)
    kinds = day_kinds_for(tariff, D, events)
    wd = cfg.load.weekdays() if tariff.weekday_calendars else None
    return build_monthly_rates(tariff, D, kinds, wd)


def _solar_values(cfg: RunConfig) -> np.ndarray:
    if cfg.solar is None:
        return zeros_like(cfg.load).values
    if len(cfg.solar) != len(cfg.load) or cfg.solar.start != cfg.load.start:
        raise CliError("solar and load series must cover the same intervals")
    return cfg.solar.values


def _grid_values(args, cfg: RunConfig) -> np.ndarray:
    if not args.grid:
        raise CliError("--grid is required")
    grid = _read_series(args.grid, args.grid_column)
    if len(grid) != len(cfg.load) or grid.start != cfg.load.start:
        raise CliError("grid and load series must cover the same intervals")
    return grid.values


def cmd_bill(args) -> int:
    cfg = _config(args, need_bess=False)
    rates = _month_rates(cfg)
    if args.which == "load":
        p = cfg.load.values
    elif args.which == "with_solar":
        p = cfg.load.values - _solar_values(cfg)
        if cfg.export_mode is ExportMode.NO_EXPORT:
            p = np.maximum(p, 0.0)
    else:
        p = _grid_values(args, cfg)
    b = billing.evaluate_cost(p, rates, cfg.load.step_hours)
    stamps = cfg.load.timestamps()
    print(billing.format_bill(b, f"Bill ({args.which})", stamps))
    if args.json:
        _write_json(args.json, b.to_dict(stamps))
    return 0


def cmd_savings(args) -> int:
    cfg = _config(args, need_bess=False)
    rates = _month_rates(cfg)
    report = billing.savings(cfg.load.values, _solar_values(cfg), _grid_values(args, cfg), rates,
                             cfg.load.step_hours, floor_with_solar=cfg.export_mode is ExportMode.NO_EXPORT)
    print(billing.format_savings(report))
    if args.json:
        _write_json(args.json, report.to_dict(cfg.load.timestamps()))
    return 0


RANK_COLUMNS = ["rank", "tariff", "rate_type", "bill_load_only", "bill_with_solar",
                "bill_optimized", "savings_1", "savings_2"]


def cmd_compare(args) -> int:
    cfg = _config(args)
    ranking = compare_tariffs(cfg.load, cfg.solar, cfg.bess, cfg.tariffs, cpp_days=cfg.cpp_days,
                              export_mode=cfg.export_mode, terminal_soc_frac=cfg.terminal_soc)
    rows = [r.row() for r in ranking]
    print(f"{'#':>2}  {'tariff':<20}{'type':>5}{'load only':>14}{'with solar':>14}"
          f"{'optimized':>14}{'savings 1':>13}{'savings 2':>13}")
    for r in rows:
        print(f"{r['rank']:>2}  {r['tariff']:<20}{r['rate_type']:>5}{r['bill_load_only']:>14,.2f}"
              f"{r['bill_with_solar']:>14,.2f}{r['bill_optimized']:>14,.2f}"
              f"{r['savings_1']:>13,.2f}{r['savings_2']:>13,.2f}")
    if cfg.out:
        def write(stage):
            with open(stage.path("ranking.csv"), "w", newline="") as fh:
                w = csv.DictWriter(fh, RANK_COLUMNS)
                w.writeheader()
                for r in rows:
                    w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
            _write_json(stage.path("ranking.json"), rows)
        _staged(cfg.out, write)
    return 0


def cmd_select_cpp_days(args) -> int:
    load = _read_series(args.load)
    days = select_cpp_days(load, args.k)
    print(",".join(str(d) for d in days))
    return 0


def cmd_project(args) -> int:
    history = analysis.load_rate_history(args.history)
    fits = analysis.quadratic_fit_project(history, args.horizon)
    for name in sorted(fits):
        f = fits[name]
        proj = ", ".join(f"{history.years[-1] + k + 1}: {v:.6g}" for k, v in enumerate(f.projected))
        print(f"{name}: a={f.a:.6g} b={f.b:.6g} c={f.c:.6g} residual={f.residual:.3g}  [{proj}]")
    if args.out:
        def write(stage):
            analysis.write_projection_csv(history, fits, stage.path("projection.csv"))
            if args.plot:
                plotting.plot_projection(history, fits, stage.path("projection.png"))
        _staged(args.out, write)
    return 0


def cmd_correlate(args) -> int:
    cfg = _config(args)
    history = analysis.load_rate_history(args.history)
    result = analysis.sensitivity_sweep(cfg.load, cfg.solar, cfg.bess, cfg.tariffs[0], history,
                                        args.horizon, cpp_days=cfg.cpp_days, export_mode=cfg.export_mode,
                                        terminal_soc_frac=cfg.terminal_soc)
    for run in result.runs:
        tag = " (projected)" if run.projected else ""
        print(f"{run.year}{tag}: savings 1 {run.report.savings_1:,.2f}  savings 2 {run.report.savings_2:,.2f}")
    print()
    for c in result.correlations:
        value = f"{c.r:+.3f}" if c.r is not None else f"undefined ({c.note})"
        print(f"{c.savings:<10}{c.charge:<28}n={c.n:<4}{value}")
    if cfg.out:
        def write(stage):
            analysis.write_sweep_csv(result, stage.path("sensitivity.csv"))
            analysis.write_correlation_csv(result, stage.path("correlations.csv"))
            if cfg.plot:
                plotting.plot_sensitivity(result, stage.path("sensitivity.png"))
                if result.fits:
                    plotting.plot_projection(history, result.fits, stage.path("projection.png"))
        _staged(cfg.out, write)
    return 0


# -- parser --------------------------------------------------------------

def _data_args(p: argparse.ArgumentParser, bess: bool = True, cpp: bool = True) -> None:
    p.add_argument("--load", required=True, help="building load CSV (timestamp,kw)")
    p.add_argument("--solar", help="solar generation CSV (timestamp,kw)")
    p.add_argument("--no-solar", action="store_true", help="run without solar (zero generation)")
    p.add_argument("--tariff", required=True, help="tariff config file (YAML)")
    if bess:
        p.add_argument("--bess", help="battery config file with a 'bess' block; omit for no battery")
    p.add_argument("--export-mode", choices=["no-export", "free-export"], default="no-export",
                   help="no-export curtails surplus solar; free-export lets grid power go negative")
    if cpp:
        p.add_argument("--cpp-days", help="comma-separated CPP event day indices, e.g. 9,12,20")
        p.add_argument("--cpp-auto", type=int, metavar="K",
                       help="use the K highest-peak days of the month as CPP event days")


def _optimizer_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--terminal-soc", type=float, metavar="FRAC",
                   help="require each day to end with at least FRAC of capacity stored")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bessrate",
        description="Battery dispatch optimization and billing under utility rate structures A-F.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-day audit notes")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimize", help="optimize a month and write dispatch, bills and savings")
    _data_args(p)
    _optimizer_args(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--dump-lp", action="store_true", help="also write each day's LP in CPLEX LP format")
    p.add_argument("--plot", action="store_true", help="render dispatch.png next to the reports")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("bill", help="monthly bill for load, load net of solar, or a grid series")
    _data_args(p, bess=False)
    p.add_argument("--which", choices=["load", "with_solar", "grid"], default="load")
    p.add_argument("--grid", help="grid draw CSV for --which grid")
    p.add_argument("--grid-column", default="kw", help="column of --grid to read (grid_kw for dispatch.csv)")
    p.add_argument("--json", help="also write the bill as JSON to this file")
    p.set_defaults(func=cmd_bill)

    p = sub.add_parser("savings", help="Savings 1 and Savings 2 for a given grid series")
    _data_args(p, bess=False)
    p.add_argument("--grid", required=True, help="optimized grid draw CSV")
    p.add_argument("--grid-column", default="kw", help="column of --grid to read (grid_kw for dispatch.csv)")
    p.add_argument("--json", help="also write the report as JSON to this file")
    p.set_defaults(func=cmd_savings)

    p = sub.add_parser("compare", help="rank tariffs by optimized monthly bill")
    p.add_argument("--load", required=True, help="building load CSV (timestamp,kw)")
    p.add_argument("--solar", help="solar generation CSV (timestamp,kw)")
    p.add_argument("--no-solar", action="store_true", help="run without solar (zero generation)")
    p.add_argument("--tariff", required=True, action="append", help="tariff config; repeat per tariff")
    p.add_argument("--bess", help="battery config file; omit for no battery")
    p.add_argument("--export-mode", choices=["no-export", "free-export"], default="no-export")
    p.add_argument("--cpp-days", help="comma-separated CPP event day indices")
    p.add_argument("--cpp-auto", type=int, metavar="K", help="K highest-peak days as CPP event days")
    _optimizer_args(p)
    p.add_argument("--out", help="write ranking.csv and ranking.json here")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("select-cpp-days", help="print the K highest-peak day indices")
    p.add_argument("--load", required=True, help="building load CSV (timestamp,kw)")
    p.add_argument("--k", type=int, default=3, help="number of days (default 3)")
    p.set_defaults(func=cmd_select_cpp_days)

    p = sub.add_parser("project", help="quadratic projection of a rate history")
    p.add_argument("--history", required=True, help="rate history CSV (year,charge_name,value)")
    p.add_argument("--horizon", type=int, default=3, help="years to project (default 3)")
    p.add_argument("--out", help="write projection.csv here")
    p.add_argument("--plot", action="store_true", help="render projection.png next to the CSV")
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("correlate", help="re-optimize per historical/projected year and correlate savings")
    _data_args(p)
    _optimizer_args(p)
    p.add_argument("--history", required=True, help="rate history CSV (year,charge_name,value)")
    p.add_argument("--horizon", type=int, default=0, help="projected years to add (default 0)")
    p.add_argument("--out", help="write sensitivity.csv and correlations.csv here")
    p.add_argument("--plot", action="store_true", help="render sensitivity.png next to the CSVs")
    p.set_defaults(func=cmd_correlate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
