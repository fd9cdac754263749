"""Rate structures A-F, period calendars and per-interval rate vectors."""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping

import numpy as np
import yaml

from ._config import read_yaml
from .timeseries import MINUTES_PER_DAY, IntervalSeries


class TariffError(ValueError):
    pass


class RateType(str, enum.Enum):
    A = "A"  # TOU energy + monthly peak demand
    B = "B"  # TOU energy + time-related demand
    C = "C"  # TOU energy + time-related + monthly peak demand
    D = "D"  # critical peak pricing
    E = "E"  # flat energy + monthly peak demand
    F = "F"  # TOU energy only


class Period(str, enum.Enum):
    ON = "on"
    MID = "mid"
    OFF = "off"
    SUPER_OFF = "super_off"

    @property
    def label(self) -> str:
        return {"on": "OnPeak", "mid": "MidPeak", "off": "OffPeak", "super_off": "SuperOffPeak"}[self.value]


class DayKind(str, enum.Enum):
    NORMAL = "normal"
    CPP_EVENT = "cpp_event"
    CPP_NON_EVENT = "cpp_season_non_event"


WEEKDAY_KEYS = ("mon", "tue", "wed", "thu", "fri", "sat", "sun")

DEFAULT_WINDOWS = {
    Period.ON: [("12:00", "18:00")],
    Period.MID: [("08:00", "12:00"), ("18:00", "23:00")],
}
DEFAULT_CPP_WINDOW = ("16:00", "21:00")


def _minute_of_day(text: str) -> int:
    try:
        hh, mm = str(text).split(":")
        minute = int(hh) * 60 + int(mm)
    except ValueError:
        raise TariffError(f"bad time of day {text!r}, expected HH:MM") from None
    if not 0 <= minute <= MINUTES_PER_DAY:
        raise TariffError(f"time of day out of range: {text!r}")
    return minute


def _window_to_intervals(start: str, end: str, T: int) -> range:
    step = MINUTES_PER_DAY // T
    lo, hi = _minute_of_day(start), _minute_of_day(end)
    if hi <= lo:
        raise TariffError(f"window {start}-{end} must end after it starts")
    if lo % step or hi % step:
        raise TariffError(f"window {start}-{end} is not aligned to {step}-minute intervals")
    return range(lo // step, hi // step)


@dataclass(frozen=True)
class PeriodCalendar:
    """Period assigned to each interval of the day; ``len`` is T."""

    periods: tuple[Period, ...]

    def __post_init__(self):
        if not self.periods:
            raise TariffError("calendar must cover at least one interval")
        object.__setattr__(self, "periods", tuple(Period(p) for p in self.periods))

    def __len__(self):
        return len(self.periods)

    def __getitem__(self, t: int) -> Period:
        return self.periods[t]

    def mask(self, period: Period) -> np.ndarray:
        return np.array([p is period for p in self.periods])

    def used_periods(self) -> list[Period]:
        return [p for p in Period if p in self.periods]

    @classmethod
    def from_windows(
        cls,
        windows: Mapping[Period, Iterable[tuple[str, str]]],
        T: int = 96,
        default: Period = Period.OFF,
    ) -> PeriodCalendar:
        if T <= 0 or MINUTES_PER_DAY % T:
            raise TariffError(f"T={T} does not divide a day into whole minutes")
        periods = [None] * T
        for period, spans in windows.items():
            for start, end in spans:
                for t in _window_to_intervals(start, end, T):
                    if periods[t] is not None and periods[t] != period:
                        raise TariffError(f"interval {t} assigned to both {periods[t].value} and {period.value}")
                    periods[t] = Period(period)
        return cls(tuple(default if p is None else p for p in periods))


def default_calendar(T: int = 96) -> PeriodCalendar:
    return PeriodCalendar.from_windows(DEFAULT_WINDOWS, T)


@dataclass(frozen=True)
class CppParams:
    event_energy_rate: float
    demand_discount: float
    event_window: tuple[int, int]  # half-open interval range [start, end)
    event_days: frozenset[int] = frozenset()

    def window_mask(self, T: int) -> np.ndarray:
        m = np.zeros(T, dtype=bool)
        m[self.event_window[0]:self.event_window[1]] = True
        return m


@dataclass(frozen=True)
class Tariff:
    rate_type: RateType
    calendar: PeriodCalendar = field(default_factory=default_calendar)
    energy_rates: Mapping[Period, float] = field(default_factory=dict)
    flat_rate: float | None = None
    tr_demand_rates: Mapping[Period, float] = field(default_factory=dict)
    monthly_demand_rate: float = 0.0
    cpp: CppParams | None = None
    season: str = "summer"
    weekday_calendars: Mapping[int, PeriodCalendar] = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "rate_type", RateType(self.rate_type))
        object.__setattr__(self, "energy_rates", {Period(k): float(v) for k, v in self.energy_rates.items()})
        object.__setattr__(self, "tr_demand_rates", {Period(k): float(v) for k, v in self.tr_demand_rates.items()})
        problems = self.violations()
        if problems:
            raise TariffError("; ".join(problems))

    @property
    def T(self) -> int:
        return len(self.calendar)

    def violations(self) -> list[str]:
        rt = self.rate_type
        out = []
        rates = dict(self.energy_rates)
        rates.update({f"tr_{k.value}": v for k, v in self.tr_demand_rates.items()})
        rates["monthly_demand_rate"] = self.monthly_demand_rate
        if self.flat_rate is not None:
            rates["flat"] = self.flat_rate
        if self.cpp is not None:
            rates["cpp.event_energy_rate"] = self.cpp.event_energy_rate
            rates["cpp.demand_discount"] = self.cpp.demand_discount
        for key, v in rates.items():
            key = getattr(key, "value", key)
            if not np.isfinite(v) or v < 0:
                out.append(f"rate {key} must be finite and >= 0, got {v}")

        calendars = [self.calendar, *self.weekday_calendars.values()]
        for wd, cal in self.weekday_calendars.items():
            if len(cal) != self.T:
                out.append(f"weekday {wd} calendar has {len(cal)} intervals, expected {self.T}")
        if rt is RateType.E:
            if self.flat_rate is None:
                out.append("type E requires energy_rates.flat")
            if self.energy_rates:
                out.append("type E takes only energy_rates.flat")
        else:
            if self.flat_rate is not None:
                out.append(f"energy_rates.flat is only valid for type E, not {rt.value}")
            needed = {p for cal in calendars for p in cal.used_periods()}
            for p in sorted(needed - set(self.energy_rates), key=list(Period).index):
                out.append(f"type {rt.value} calendar uses {p.value} but energy_rates.{p.value} is missing")
        if rt in (RateType.B, RateType.C, RateType.D):
            if not self.tr_demand_rates:
                out.append(f"type {rt.value} requires tr_demand_rates")
        elif self.tr_demand_rates:
            out.append(f"type {rt.value} takes no tr_demand_rates")
        if rt in (RateType.B, RateType.F) and self.monthly_demand_rate != 0:
            out.append(f"type {rt.value} takes no monthly_demand_rate")
        if rt is RateType.D:
            if self.cpp is None:
                out.append("type D requires a cpp block")
            else:
                lo, hi = self.cpp.event_window
                if not 0 <= lo < hi <= self.T:
                    out.append(f"cpp event window {self.cpp.event_window} outside 0..{self.T}")
        elif self.cpp is not None:
            out.append(f"cpp block is only valid for type D, not {rt.value}")
        if self.season not in ("summer", "winter"):
            out.append(f"season must be 'summer' or 'winter', got {self.season!r}")
        return out

    def calendar_for(self, weekday: int | None) -> PeriodCalendar:
        if weekday is None:
            return self.calendar
        return self.weekday_calendars.get(weekday, self.calendar)

    @property
    def cpp_active(self) -> bool:
        return self.rate_type is RateType.D and self.season == "summer"

    def with_rates(self, **changes: Any) -> Tariff:
        """Copy with some charges replaced; keys use the config dotted names."""
        energy = dict(self.energy_rates)
        tr = dict(self.tr_demand_rates)
        kw: dict[str, Any] = {}
        cpp = self.cpp
        for key, value in changes.items():
            group, _, sub = key.partition(".")
            if group == "energy_rates" and sub == "flat":
                kw["flat_rate"] = float(value)
            elif group == "energy_rates":
                energy[Period(sub)] = float(value)
            elif group == "tr_demand_rates":
                tr[Period(sub)] = float(value)
            elif key == "monthly_demand_rate":
                kw["monthly_demand_rate"] = float(value)
            elif group == "cpp" and cpp is not None and sub in ("event_energy_rate", "demand_discount"):
                cpp = replace(cpp, **{sub: float(value)})
            else:
                raise TariffError(f"unknown charge {key!r} for type {self.rate_type.value}")
        return Tariff(
            rate_type=self.rate_type, calendar=self.calendar, energy_rates=energy,
            flat_rate=kw.get("flat_rate", self.flat_rate), tr_demand_rates=tr,
            monthly_demand_rate=kw.get("monthly_demand_rate", self.monthly_demand_rate),
            cpp=cpp, season=self.season, weekday_calendars=self.weekday_calendars, name=self.name,
        )

    def charges(self) -> dict[str, float]:
        """Every charge of this tariff keyed by its config dotted name."""
        out = {f"energy_rates.{p.value}": v for p, v in self.energy_rates.items()}
        if self.flat_rate is not None:
            out["energy_rates.flat"] = self.flat_rate
        out.update({f"tr_demand_rates.{p.value}": v for p, v in self.tr_demand_rates.items()})
        if self.rate_type not in (RateType.B, RateType.F):
            out["monthly_demand_rate"] = self.monthly_demand_rate
        if self.cpp is not None:
            out["cpp.event_energy_rate"] = self.cpp.event_energy_rate
            out["cpp.demand_discount"] = self.cpp.demand_discount
        return out


@dataclass(frozen=True)
class DailyRates:
    alpha: np.ndarray
    demand_diagonals: dict[Period, np.ndarray]
    monthly_beta: float

    def __len__(self):
        return self.alpha.size


@dataclass(frozen=True)
class MonthlyRates:
    """Month-long rates; block-diagonal demand matrices kept as concatenated diagonals."""

    alpha: np.ndarray
    demand_diagonals: dict[Period, np.ndarray]
    monthly_beta: float
    days: int

    def __len__(self):
        return self.alpha.size

    def day(self, d: int) -> DailyRates:
        T = len(self) // self.days
        sl = slice(d * T, (d + 1) * T)
        return DailyRates(self.alpha[sl], {p: v[sl] for p, v in self.demand_diagonals.items()}, self.monthly_beta)


def build_daily_rates(
    t: Tariff, day_kind: DayKind | str = DayKind.NORMAL, weekday: int | None = None
) -> DailyRates:
    day_kind = DayKind(day_kind)
    if day_kind is not DayKind.NORMAL and t.rate_type is not RateType.D:
        raise TariffError(f"day kind {day_kind.value} requires a type D tariff, not {t.rate_type.value}")
    cal = t.calendar_for(weekday)
    T = len(cal)
    if t.rate_type is RateType.E:
        alpha = np.full(T, t.flat_rate, dtype=float)
    else:
        alpha = np.array([t.energy_rates[p] for p in cal.periods], dtype=float)

    diagonals = {}
    for p, rate in t.tr_demand_rates.items():
        diagonals[p] = np.where(cal.mask(p), rate, 0.0)

    if day_kind is not DayKind.NORMAL:
        window = t.cpp.window_mask(T)
        if day_kind is DayKind.CPP_EVENT:
            alpha[window] = t.cpp.event_energy_rate
        else:
            for p, diag in diagonals.items():
                inside = window & cal.mask(p)
                diag[inside] = np.maximum(diag[inside] - t.cpp.demand_discount, 0.0)

    beta = 0.0 if t.rate_type in (RateType.B, RateType.F) else float(t.monthly_demand_rate)
    return DailyRates(alpha, diagonals, beta)


def build_monthly_rates(
    t: Tariff,
    D: int,
    day_kinds: list[DayKind | str],
    weekdays: list[int] | None = None,
) -> MonthlyRates:
    if len(day_kinds) != D:
        raise TariffError(f"got {len(day_kinds)} day kinds for {D} days")
    if weekdays is None:
        weekdays = [None] * D
    days = [build_daily_rates(t, k, w) for k, w in zip(day_kinds, weekdays)]
    alpha = np.concatenate([r.alpha for r in days])
    diagonals = {p: np.concatenate([r.demand_diagonals[p] for r in days]) for p in t.tr_demand_rates}
    beta = days[0].monthly_beta if days else 0.0
    return MonthlyRates(alpha, diagonals, beta, D)


def day_kinds_for(t: Tariff, D: int, cpp_days: Iterable[int] = ()) -> list[DayKind]:
    if not t.cpp_active:
        return [DayKind.NORMAL] * D
    events = set(cpp_days)
    bad = [d for d in events if not 0 <= d < D]
    if bad:
        raise TariffError(f"CPP day indices {sorted(bad)} outside 0..{D - 1}")
    return [DayKind.CPP_EVENT if d in events else DayKind.CPP_NON_EVENT for d in range(D)]


def select_cpp_days(load: IntervalSeries | np.ndarray, k: int, T: int | None = None) -> list[int]:
    """Indices of the ``k`` days with the highest interval peak, ascending.

    Ties go to the earlier day. ``load`` is an IntervalSeries of whole days, or a
    flat array together with ``T``.
    """
    if isinstance(load, IntervalSeries):
        T = load.intervals_per_day
        D = load.require_whole_days()
        values = load.values
    else:
        values = np.asarray(load, dtype=float)
        if T is None or values.size % T:
            raise TariffError("array input needs T dividing its length")
        D = values.size // T
    if k < 0 or k > D:
        raise TariffError(f"cannot select {k} CPP days from a {D}-day month")
    peaks = values.reshape(D, T).max(axis=1)
    order = sorted(range(D), key=lambda d: (-peaks[d], d))
    return sorted(order[:k])


# -- config files ---------------------------------------------------------

def format_rate(x: float) -> str:
    """Shortest decimal string that reparses to ``x`` ("16", "0.13837")."""
    s = repr(float(x))
    return s[:-2] if s.endswith(".0") else s


def _rate(value: Any, key: str) -> float:
    if isinstance(value, bool):
        raise TariffError(f"{key}: expected a number, got {value!r}")
    try:
        return float(value)
    except (TypeError, ValueError):
        raise TariffError(f"{key}: expected a number, got {value!r}") from None


def _calendar_from_config(node: Mapping[str, Any], T: int) -> PeriodCalendar:
    windows = {}
    for key, spans in node.items():
        if key in ("weekday_overrides", "intervals_per_day"):
            continue
        try:
            period = Period(key)
        except ValueError:
            raise TariffError(f"calendar: unknown period {key!r}") from None
        windows[period] = [tuple(span) for span in spans]
    return PeriodCalendar.from_windows(windows, T)


def tariff_from_config(cfg: Mapping[str, Any]) -> Tariff:
    if "tariff" in cfg and isinstance(cfg["tariff"], Mapping):
        cfg = cfg["tariff"]
    try:
        rate_type = RateType(str(cfg["rate_type"]).upper())
    except KeyError:
        raise TariffError("tariff config needs rate_type") from None
    except ValueError:
        raise TariffError(f"unknown rate_type {cfg['rate_type']!r}") from None

    cal_node = cfg.get("calendar") or {}
    T = int(cal_node.get("intervals_per_day", 96))
    calendar = _calendar_from_config(cal_node, T) if any(
        k not in ("weekday_overrides", "intervals_per_day") for k in cal_node) else default_calendar(T)
    weekday_calendars = {}
    for day, node in (cal_node.get("weekday_overrides") or {}).items():
        wd = WEEKDAY_KEYS.index(str(day).lower()[:3]) if not isinstance(day, int) else day
        weekday_calendars[wd] = _calendar_from_config(node, T)

    energy = dict(cfg.get("energy_rates") or {})
    flat = energy.pop("flat", None)
    energy_rates = {}
    for key, v in energy.items():
        try:
            energy_rates[Period(key)] = _rate(v, f"energy_rates.{key}")
        except ValueError as exc:
            raise TariffError(f"energy_rates: unknown key {key!r}") from exc
    tr = {}
    for key, v in (cfg.get("tr_demand_rates") or {}).items():
        try:
            tr[Period(key)] = _rate(v, f"tr_demand_rates.{key}")
        except ValueError as exc:
            raise TariffError(f"tr_demand_rates: unknown key {key!r}") from exc

    cpp = None
    if cfg.get("cpp") is not None:
        c = cfg["cpp"]
        window = _window_to_intervals(
            c.get("event_window_start", DEFAULT_CPP_WINDOW[0]),
            c.get("event_window_end", DEFAULT_CPP_WINDOW[1]), T)
        cpp = CppParams(
            event_energy_rate=_rate(c.get("event_energy_rate"), "cpp.event_energy_rate"),
            demand_discount=_rate(c.get("demand_discount", 0), "cpp.demand_discount"),
            event_window=(window.start, window.stop),
            event_days=frozenset(int(d) for d in c.get("event_days") or ()),
        )
    return Tariff(
        rate_type=rate_type,
        calendar=calendar,
        energy_rates=energy_rates,
        flat_rate=None if flat is None else _rate(flat, "energy_rates.flat"),
        tr_demand_rates=tr,
        monthly_demand_rate=_rate(cfg.get("monthly_demand_rate", 0), "monthly_demand_rate"),
        cpp=cpp,
        season=str(cfg.get("season", "summer")),
        weekday_calendars=weekday_calendars,
        name=str(cfg.get("name", "")),
    )


def _calendar_to_config(cal: PeriodCalendar) -> dict[str, Any]:
    step = MINUTES_PER_DAY // len(cal)
    out: dict[str, list[list[str]]] = {}
    t = 0
    while t < len(cal):
        p = cal[t]
        end = t
        while end < len(cal) and cal[end] is p:
            end += 1
        if p is not Period.OFF:
            lo, hi = t * step, end * step
            out.setdefault(p.value, []).append([f"{lo // 60:02d}:{lo % 60:02d}", f"{hi // 60:02d}:{hi % 60:02d}"])
        t = end
    return out


def tariff_to_config(t: Tariff) -> dict[str, Any]:
    """Config tree whose numbers are decimal strings (see :func:`format_rate`)."""
    step = MINUTES_PER_DAY // t.T
    cfg: dict[str, Any] = {"rate_type": t.rate_type.value}
    if t.name:
        cfg["name"] = t.name
    cfg["season"] = t.season
    energy = {p.value: format_rate(v) for p, v in t.energy_rates.items()}
    if t.flat_rate is not None:
        energy["flat"] = format_rate(t.flat_rate)
    cfg["energy_rates"] = energy
    if t.tr_demand_rates:
        cfg["tr_demand_rates"] = {p.value: format_rate(v) for p, v in t.tr_demand_rates.items()}
    if t.rate_type not in (RateType.B, RateType.F):
        cfg["monthly_demand_rate"] = format_rate(t.monthly_demand_rate)
    if t.cpp is not None:
        lo, hi = (i * step for i in t.cpp.event_window)
        cfg["cpp"] = {
            "event_energy_rate": format_rate(t.cpp.event_energy_rate),
            "demand_discount": format_rate(t.cpp.demand_discount),
            "event_window_start": f"{lo // 60:02d}:{lo % 60:02d}",
            "event_window_end": f"{hi // 60:02d}:{hi % 60:02d}",
            "event_days": sorted(t.cpp.event_days),
        }
    cal = _calendar_to_config(t.calendar)
    cal["intervals_per_day"] = t.T
    if t.weekday_calendars:
        cal["weekday_overrides"] = {WEEKDAY_KEYS[wd]: _calendar_to_config(c) for wd, c in t.weekday_calendars.items()}
    cfg["calendar"] = cal
    return cfg


def load_tariff(path: str | os.PathLike) -> Tariff:
    if not os.path.exists(path):
        raise TariffError(f"no such tariff file: {path}")
    with open(path) as fh:
        cfg = read_yaml(fh)
    if not isinstance(cfg, Mapping):
        raise TariffError(f"{path}: expected a mapping at top level")
    t = tariff_from_config(cfg)
    if not t.name:
        t = replace(t, name=os.path.splitext(os.path.basename(str(path)))[0])
    return t


def dump_tariff(t: Tariff) -> str:
    """YAML text for ``t``; rates are written as plain decimal literals."""
    cfg = tariff_to_config(t)

    class _Dumper(yaml.SafeDumper):
        pass

    def _plain(dumper, value):
        # numeric-looking strings go out unquoted so they reparse as numbers
        try:
            float(value)
        except ValueError:
            return dumper.represent_str(value)
        return dumper.represent_scalar("tag:yaml.org,2002:float", value, style="")

    _Dumper.add_representer(str, _plain)
    return yaml.dump(cfg, Dumper=_Dumper, sort_keys=False)
