"""Daily dispatch problem as a linear program, and its physical solution.

Max terms in the bill become epigraph scalars: ``m_p >= diag_p[t] * P^G_t`` for
every interval, and ``m_peak >= P^G_t`` when a monthly demand charge applies.
The charge/discharge exclusivity is relaxed to a continuous ``delta_t`` in [0, 1].
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from . import bess as bess_mod
from .billing import CostBreakdown, evaluate_cost
from .bess import BessSpec
from .solver import LpProblem, LpSolution
from .tariff import DailyRates, Period


class ExportMode(str, enum.Enum):
    NO_EXPORT = "no_export_with_curtailment"
    FREE_EXPORT = "free_export"

    @classmethod
    def parse(cls, text: str) -> ExportMode:
        aliases = {"no-export": cls.NO_EXPORT, "free-export": cls.FREE_EXPORT}
        return aliases.get(text) or cls(text)


class FormulationError(ValueError):
    pass


class ConsistencyError(RuntimeError):
    """Solver output disagrees with an independent recomputation."""


OBJECTIVE_RTOL = 1e-6


@dataclass(frozen=True)
class DayProblem:
    load: np.ndarray
    solar: np.ndarray
    rates: DailyRates
    bess: BessSpec
    e_init: float
    dt: float = 0.25
    export_mode: ExportMode = ExportMode.NO_EXPORT
    terminal_soc_frac: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "load", np.asarray(self.load, dtype=float))
        object.__setattr__(self, "solar", np.asarray(self.solar, dtype=float))
        object.__setattr__(self, "export_mode", ExportMode(self.export_mode))

    @property
    def T(self) -> int:
        return self.load.size

    def check(self) -> None:
        T = self.T
        if self.solar.size != T or len(self.rates) != T:
            raise FormulationError(
                f"length mismatch: load {T}, solar {self.solar.size}, rates {len(self.rates)}")
        if self.dt <= 0:
            raise FormulationError(f"dt must be positive, got {self.dt}")
        if np.any(self.load < 0) or np.any(self.solar < 0):
            raise FormulationError("load and solar must be non-negative")
        problems = bess_mod.validate(self.bess)
        if problems:
            raise FormulationError("invalid battery: " + "; ".join(problems))
        slack = 1e-9 * max(1.0, self.bess.capacity)
        if not self.bess.e_min - slack <= self.e_init <= self.bess.e_max + slack:
            raise FormulationError(
                f"e_init {self.e_init} kWh outside [{self.bess.e_min}, {self.bess.e_max}]")
        if self.terminal_soc_frac is not None:
            target = self.terminal_soc_frac * self.bess.capacity
            if not self.bess.e_min - slack <= target <= self.bess.e_max + slack:
                raise FormulationError(f"terminal SOC {target} kWh outside the energy bounds")


@dataclass(frozen=True)
class IndexMap:
    T: int
    grid: slice
    solar_to_load: slice
    solar_to_bess: slice
    charge: slice
    discharge: slice
    curtail: slice | None
    delta: slice
    energy: slice
    epigraph: dict[Period, int] = field(default_factory=dict)
    peak: int | None = None


@dataclass(frozen=True)
class DailySolution:
    p_grid: np.ndarray
    p_solar_to_load: np.ndarray
    p_solar_to_bess: np.ndarray
    p_charge: np.ndarray
    p_discharge: np.ndarray
    p_curtail: np.ndarray
    e_traj: np.ndarray
    delta: np.ndarray
    objective: float
    lp_objective: float
    cost: CostBreakdown
    epigraph: dict[str, float] = field(default_factory=dict)


def build_daily_lp(p: DayProblem) -> tuple[LpProblem, IndexMap]:
    p.check()
    T, dt, b, r = p.T, p.dt, p.bess, p.rates
    free_export = p.export_mode is ExportMode.FREE_EXPORT

    n = 0

    def block(size):
        nonlocal n
        s = slice(n, n + size)
        n += size
        return s

    G, SL, SB, CH, DIS = (block(T) for _ in range(5))
    CURT = None if free_export else block(T)
    DELTA = block(T)
    E = block(T + 1)
    active = [per for per, diag in r.demand_diagonals.items() if np.any(diag > 0)]
    epi = {per: block(1).start for per in active}
    peak = block(1).start if r.monthly_beta > 0 else None

    names = [""] * n
    for tag, s in (("g", G), ("sl", SL), ("sb", SB), ("ch", CH), ("dis", DIS),
                   ("curt", CURT), ("delta", DELTA), ("e", E)):
        if s is not None:
            for k, j in enumerate(range(s.start, s.stop)):
                names[j] = f"{tag}_{k}"
    for per, j in epi.items():
        names[j] = f"m_{per.value}"
    if peak is not None:
        names[peak] = "m_peak"

    c = np.zeros(n)
    c[G] = dt * r.alpha
    for j in epi.values():
        c[j] = 1.0
    if peak is not None:
        c[peak] = r.monthly_beta

    lower = np.zeros(n)
    upper = np.full(n, np.inf)
    if free_export:
        lower[G] = -np.inf
    upper[CH] = b.p_charge_max
    upper[DIS] = b.p_discharge_max
    upper[DELTA] = 1.0
    lower[E] = b.e_min
    upper[E] = b.e_max
    lower[E.start] = upper[E.start] = p.e_init
    for per, j in epi.items():
        # the billed max runs over the whole product vector, zeros included
        lower[j] = 0.0 if np.any(r.demand_diagonals[per] == 0) else -np.inf
    if peak is not None:
        lower[peak] = -np.inf

    t = np.arange(T)
    eq_rows, eq_cols, eq_vals, b_eq, eq_names = [], [], [], [], []

    def add_eq(rows, cols, vals):
        eq_rows.append(rows)
        eq_cols.append(cols)
        eq_vals.append(vals)

    # stored energy: E[t+1] - E[t] - dt*CH[t] + dt*DIS[t] = 0
    r0 = 0
    rows = r0 + t
    add_eq(rows, E.start + t + 1, np.ones(T))
    add_eq(rows, E.start + t, -np.ones(T))
    add_eq(rows, CH.start + t, np.full(T, -dt))
    add_eq(rows, DIS.start + t, np.full(T, dt))
    b_eq.append(np.zeros(T))
    eq_names += [f"soc_{k}" for k in t]
    # charging only from solar: CH[t] - eta+ * SB[t] = 0
    rows = r0 + T + t
    add_eq(rows, CH.start + t, np.ones(T))
    add_eq(rows, SB.start + t, np.full(T, -b.eta_charge))
    b_eq.append(np.zeros(T))
    eq_names += [f"charge_src_{k}" for k in t]
    # solar split: SB + SL (+ CURT) = S
    rows = r0 + 2 * T + t
    add_eq(rows, SB.start + t, np.ones(T))
    add_eq(rows, SL.start + t, np.ones(T))
    if CURT is not None:
        add_eq(rows, CURT.start + t, np.ones(T))
    b_eq.append(p.solar)
    eq_names += [f"solar_{k}" for k in t]
    # load balance: SL + eta- * DIS + G = L
    rows = r0 + 3 * T + t
    add_eq(rows, SL.start + t, np.ones(T))
    add_eq(rows, DIS.start + t, np.full(T, b.eta_discharge))
    add_eq(rows, G.start + t, np.ones(T))
    b_eq.append(p.load)
    eq_names += [f"load_{k}" for k in t]
    A_eq = sp.csr_matrix(
        (np.concatenate(eq_vals), (np.concatenate(eq_rows), np.concatenate(eq_cols))), shape=(4 * T, n))

    ub_rows, ub_cols, ub_vals, b_ub, ub_names = [], [], [], [], []
    m = 0

    def add_ub(cols, vals, rhs, name):
        nonlocal m
        ub_rows.append(np.full(len(cols), m))
        ub_cols.append(np.asarray(cols))
        ub_vals.append(np.asarray(vals, dtype=float))
        b_ub.append(rhs)
        ub_names.append(name)
        m += 1

    for k in t:
        add_ub([CH.start + k, DELTA.start + k], [1.0, -b.p_charge_max], 0.0, f"ch_gate_{k}")
        add_ub([DIS.start + k, DELTA.start + k], [1.0, b.p_discharge_max], b.p_discharge_max, f"dis_gate_{k}")
    for per, j in epi.items():
        diag = r.demand_diagonals[per]
        for k in np.flatnonzero(diag > 0):
            add_ub([G.start + k, j], [diag[k], -1.0], 0.0, f"epi_{per.value}_{k}")
    if peak is not None:
        for k in t:
            add_ub([G.start + k, peak], [1.0, -1.0], 0.0, f"peak_{k}")
    if p.terminal_soc_frac is not None:
        add_ub([E.stop - 1], [-1.0], -p.terminal_soc_frac * b.capacity, "terminal_soc")
    A_ub = sp.csr_matrix(
        (np.concatenate(ub_vals), (np.concatenate(ub_rows), np.concatenate(ub_cols))), shape=(m, n))

    lp = LpProblem(
        c=c, A_ub=A_ub, b_ub=np.array(b_ub, dtype=float), A_eq=A_eq, b_eq=np.concatenate(b_eq),
        lower=lower, upper=upper, names=names, row_names_ub=ub_names, row_names_eq=eq_names,
    )
    return lp, IndexMap(T, G, SL, SB, CH, DIS, CURT, DELTA, E, epi, peak)


def _trajectory(e_init: float, p_charge, p_discharge, dt: float) -> np.ndarray:
    e = np.empty(len(p_charge) + 1)
    e[0] = e_init
    for k in range(len(p_charge)):
        e[k + 1] = bess_mod.soc_step(e[k], p_charge[k] - p_discharge[k], dt)
    return e


def _objectives_agree(a: float, b: float) -> bool:
    return abs(a - b) <= OBJECTIVE_RTOL * max(1.0, abs(a), abs(b))


def extract_solution(sol: LpSolution, idx: IndexMap, p: DayProblem) -> DailySolution:
    if not sol.optimal:
        raise FormulationError(f"cannot extract a {sol.status.value} LP solution")
    x = sol.values

    def nonneg(s):
        return np.maximum(x[s], 0.0)

    grid = x[idx.grid].copy() if p.export_mode is ExportMode.FREE_EXPORT else nonneg(idx.grid)
    charge, discharge = nonneg(idx.charge), nonneg(idx.discharge)
    curtail = nonneg(idx.curtail) if idx.curtail is not None else np.zeros(idx.T)
    cost = evaluate_cost(grid, p.rates, p.dt)
    epigraph = {per.value: float(x[j]) for per, j in idx.epigraph.items()}
    if idx.peak is not None:
        epigraph["peak"] = float(x[idx.peak])
    if not _objectives_agree(sol.objective, cost.total):
        raise ConsistencyError(
            f"LP objective {sol.objective!r} disagrees with the billed cost {cost.total!r}")
    return DailySolution(
        p_grid=grid,
        p_solar_to_load=nonneg(idx.solar_to_load),
        p_solar_to_bess=nonneg(idx.solar_to_bess),
        p_charge=charge,
        p_discharge=discharge,
        p_curtail=curtail,
        e_traj=_trajectory(p.e_init, charge, discharge, p.dt),
        delta=np.clip(x[idx.delta], 0.0, 1.0),
        objective=cost.total,
        lp_objective=sol.objective,
        cost=cost,
        epigraph=epigraph,
    )


def check_complementarity(s: DailySolution, tol: float = 1e-6) -> list[tuple[int, float]]:
    both = np.minimum(s.p_charge, s.p_discharge)
    return [(int(t), float(both[t])) for t in np.flatnonzero(both > tol)]


def repair_complementarity(s: DailySolution, p: DayProblem) -> DailySolution:
    """Net simultaneous charge and discharge away without raising grid draw.

    Removing ``m = min(P+, P-)`` from both keeps the energy trajectory. It frees
    ``m / eta+`` kW of solar and loses ``eta- * m`` kW of battery supply to the load;
    the freed solar covers that loss, and any surplus is curtailed (no export)
    or exported (free export).
    """
    b = p.bess
    m = np.minimum(s.p_charge, s.p_discharge)
    if not np.any(m > 0):
        return s
    charge = s.p_charge - m
    discharge = s.p_discharge - m
    freed = m / b.eta_charge
    lost = b.eta_discharge * m
    solar_to_bess = np.maximum(s.p_solar_to_bess - freed, 0.0)
    freed = s.p_solar_to_bess - solar_to_bess
    if p.export_mode is ExportMode.FREE_EXPORT:
        to_load = freed
    else:
        to_load = np.minimum(freed, s.p_grid + lost)
    solar_to_load = s.p_solar_to_load + to_load
    curtail = s.p_curtail + (freed - to_load)
    grid = p.load - solar_to_load - b.eta_discharge * discharge
    if p.export_mode is ExportMode.NO_EXPORT:
        grid = np.maximum(grid, 0.0)
    delta = np.where(charge > 0, 1.0, np.where(discharge > 0, 0.0, s.delta))
    cost = evaluate_cost(grid, p.rates, p.dt)
    return replace(
        s,
        p_grid=grid,
        p_solar_to_load=solar_to_load,
        p_solar_to_bess=solar_to_bess,
        p_charge=charge,
        p_discharge=discharge,
        p_curtail=curtail,
        e_traj=_trajectory(p.e_init, charge, discharge, p.dt),
        delta=delta,
        objective=cost.total,
        cost=cost,
    )


def feasibility_residuals(s: DailySolution, p: DayProblem) -> dict[str, float]:
    """Worst violation (kW or kWh) of each physical constraint family."""
    b = p.bess
    e = s.e_traj
    d = s.delta
    res = {
        "energy_bounds": float(max(np.max(b.e_min - e), np.max(e - b.e_max), 0.0)),
        "energy_dynamics": float(np.max(np.abs(e[1:] - e[:-1] - (s.p_charge - s.p_discharge) * p.dt))),
        "initial_energy": abs(float(e[0]) - p.e_init),
        "charge_gate": float(max(np.max(s.p_charge - d * b.p_charge_max), np.max(-s.p_charge), 0.0)),
        "discharge_gate": float(max(np.max(s.p_discharge - (1 - d) * b.p_discharge_max),
                                    np.max(-s.p_discharge), 0.0)),
        "delta_range": float(max(np.max(-d), np.max(d - 1), 0.0)),
        "charge_from_solar": float(np.max(np.abs(s.p_charge - b.eta_charge * s.p_solar_to_bess))),
        "solar_split": float(np.max(np.abs(p.solar - s.p_solar_to_bess - s.p_solar_to_load - s.p_curtail))),
        "load_balance": float(np.max(np.abs(
            p.load - s.p_solar_to_load - b.eta_discharge * s.p_discharge - s.p_grid))),
        "nonnegative_flows": float(max(0.0, -min(
            s.p_solar_to_load.min(), s.p_solar_to_bess.min(), s.p_curtail.min())))
    }
    if p.export_mode is ExportMode.NO_EXPORT:
        res["nonnegative_flows"] = max(res["nonnegative_flows"], float(max(0.0, -s.p_grid.min())))
    if p.terminal_soc_frac is not None:
        res["terminal_energy"] = max(0.0, p.terminal_soc_frac * b.capacity - float(e[-1]))
    return res


def epigraph_gaps(s: DailySolution, p: DayProblem) -> dict[str, float]:
    """|epigraph scalar - the max it stands for| for each demand term."""
    gaps = {}
    for per, diag in p.rates.demand_diagonals.items():
        if per.value in s.epigraph:
            gaps[per.value] = abs(s.epigraph[per.value] - float(np.max(diag * s.p_grid)))
    if "peak" in s.epigraph:
        gaps["peak"] = abs(s.epigraph["peak"] - float(np.max(s.p_grid)))
    return gaps
