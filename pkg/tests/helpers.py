"""Shared builders and the brute-force dispatch oracle used across the suite."""

import itertools

import numpy as np

from bessrate.bess import BessSpec
from bessrate.tariff import CppParams, Period, PeriodCalendar, RateType, Tariff

ON, MID, OFF = Period.ON, Period.MID, Period.OFF

# rate table values, keyed by rate type
TABLE_RATES = {
    "A": dict(energy_rates={ON: 0.3397, MID: 0.13837, OFF: 0.07637}, monthly_demand_rate=11.87),
    "B": dict(energy_rates={ON: 0.35987, MID: 0.1007, OFF: 0.03545},
              tr_demand_rates={ON: 7.06, MID: 3.13, OFF: 1.53}),
    "C": dict(energy_rates={ON: 0.10258, MID: 0.07566, OFF: 0.05727},
              tr_demand_rates={ON: 21.73, MID: 4.17}, monthly_demand_rate=19.02),
    "D": dict(energy_rates={ON: 0.07817, MID: 0.07422, OFF: 0.0724},
              tr_demand_rates={ON: 16.0, MID: 5.16}, monthly_demand_rate=17.52),
    "E": dict(flat_rate=0.0139, monthly_demand_rate=10.58),
    "F": dict(energy_rates={ON: 0.3397, MID: 0.13837, OFF: 0.07637}),
}


def table_tariff(rate_type, T=96, event_days=()):
    from bessrate.tariff import default_calendar

    kw = dict(TABLE_RATES[rate_type])
    if rate_type == "D":
        step = 1440 // T
        kw["cpp"] = CppParams(0.4, 4.11, (16 * 60 // step, 21 * 60 // step), frozenset(event_days))
    return Tariff(RateType(rate_type), calendar=default_calendar(T), **kw)


def toy_tariff(low=0.1, high=0.3, beta=5.0):
    """T=8 type A tariff: four low-price intervals then four high-price ones."""
    cal = PeriodCalendar((OFF,) * 4 + (ON,) * 4)
    return Tariff(RateType.A, calendar=cal, energy_rates={OFF: low, ON: high}, monthly_demand_rate=beta)


def toy_bess(capacity=20.0, power=10.0, e_init_frac=1.0, e_min_frac=0.0, eta=1.0):
    return BessSpec(capacity=capacity, e_min_frac=e_min_frac, e_max_frac=1.0, p_charge_max=power,
                    p_discharge_max=power, eta_charge=eta, eta_discharge=eta, e_init_frac=e_init_frac)


def bill_rows(G, rates, dt):
    """Vectorized bill of each row of ``G`` (independent of the billing module)."""
    G = np.atleast_2d(G)
    cost = dt * G @ rates.alpha
    for diag in rates.demand_diagonals.values():
        cost = cost + np.max(G * diag, axis=1)
    if rates.monthly_beta:
        cost = cost + rates.monthly_beta * G.max(axis=1)
    return cost


def _evaluate(P, load, solar, rates, bess, e_init, dt):
    """Cost of each candidate battery power row (charge > 0); inf where infeasible."""
    ch = np.maximum(P, 0.0)
    dis = np.maximum(-P, 0.0)
    energy = e_init + np.cumsum((ch - dis) * dt, axis=1)
    ok = np.all((energy >= bess.e_min - 1e-9) & (energy <= bess.e_max + 1e-9), axis=1)
    solar_to_bess = ch / bess.eta_charge if bess.eta_charge else np.zeros_like(ch)
    ok &= np.all(solar_to_bess <= solar + 1e-9, axis=1)
    # curtailment is free, so the cheapest grid draw is the non-negative remainder
    raw = load - (solar - solar_to_bess) - bess.eta_discharge * dis
    grid = np.maximum(raw, 0.0)
    cost = bill_rows(grid, rates, dt)
    return np.where(ok, cost, np.inf)


def brute_force_day(load, solar, rates, bess, e_init, dt, levels, chunk=200_000):
    """Exhaustive search over every per-interval battery power drawn from ``levels``.

    Returns (best cost, best power row). Positive power charges, negative discharges.
    """
    load = np.asarray(load, float)
    solar = np.asarray(solar, float)
    T = load.size
    best, arg = np.inf, None
    combos = itertools.product(levels, repeat=T)
    while True:
        block = np.array(list(itertools.islice(combos, chunk)), dtype=float)
        if block.size == 0:
            return best, arg
        cost = _evaluate(block, load, solar, rates, bess, e_init, dt)
        i = int(np.argmin(cost))
        if cost[i] < best:
            best, arg = float(cost[i]), block[i]


def brute_force_budget(load, solar, rates, bess, e_init, dt, step, units):
    """Exhaustive search over discharge-only rows whose levels are multiples of ``step``
    and whose total discharge is at most ``units`` steps (an energy budget)."""
    load = np.asarray(load, float)
    T = load.size
    rows = []
    for k in range(units + 1):
        for pos in itertools.combinations_with_replacement(range(T), k):
            r = np.zeros(T)
            for t in pos:
                r[t] -= step
            rows.append(r)
    P = np.array(rows)
    cost = _evaluate(P, load, np.asarray(solar, float), rates, bess, e_init, dt)
    i = int(np.argmin(cost))
    return float(cost[i]), P[i], len(rows)


def random_day(rng, T=96, with_solar=True):
    hours = np.arange(T) * 24.0 / T
    base = rng.uniform(50, 400)
    peak_at = rng.uniform(10, 19)
    load = base * (0.5 + rng.uniform(0.3, 1.2) * np.exp(-0.5 * ((hours - peak_at) / rng.uniform(1.5, 4)) ** 2))
    load *= 1 + 0.08 * rng.standard_normal(T)
    load = np.clip(load, 0.0, None)
    if with_solar:
        sun = np.clip(np.sin(np.pi * (hours - 6.0) / 13.0), 0.0, None)
        solar = rng.uniform(0.0, 1.5) * base * sun
    else:
        solar = np.zeros(T)
    return load, solar


def random_bess(rng, eta=0.95):
    cap = rng.uniform(50, 1000)
    e_min = rng.uniform(0.0, 0.3)
    e_max = rng.uniform(0.75, 1.0)
    return BessSpec(
        capacity=cap, e_min_frac=e_min, e_max_frac=e_max,
        p_charge_max=cap * rng.uniform(0.1, 0.6), p_discharge_max=cap * rng.uniform(0.1, 0.6),
        eta_charge=eta, eta_discharge=eta, e_init_frac=rng.uniform(e_min, e_max),
    )
