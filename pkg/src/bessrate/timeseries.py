"""Interval power data: CSV ingestion, validation and 15-minute resampling."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from datetime import datetime, timedelta

import numpy as np

TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M"
MINUTES_PER_DAY = 1440


class SeriesError(ValueError):
    """Raised for malformed or incomplete interval data."""


@dataclass(frozen=True)
class IntervalSeries:
    """Uniformly sampled average power (kW), naive local time."""

    start: datetime
    values: np.ndarray
    step_minutes: int = 15
    name: str = "kw"

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise SeriesError("series must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(values)):
            raise SeriesError("series contains non-finite values")
        if self.step_minutes <= 0 or 60 % self.step_minutes:
            raise SeriesError(f"step_minutes must divide 60, got {self.step_minutes}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.size

    @property
    def step_hours(self) -> float:
        return self.step_minutes / 60.0

    @property
    def intervals_per_day(self) -> int:
        return MINUTES_PER_DAY // self.step_minutes

    @property
    def n_days(self) -> int:
        return len(self) // self.intervals_per_day

    def timestamps(self) -> list[datetime]:
        step = timedelta(minutes=self.step_minutes)
        return [self.start + i * step for i in range(len(self))]

    def energy_kwh(self) -> float:
        return float(self.values.sum() * self.step_hours)

    def require_whole_days(self) -> int:
        """Return the day count, raising unless the series is midnight-aligned whole days."""
        if self.start.hour or self.start.minute:
            raise SeriesError(f"series must start at midnight, starts at {self.start:%H:%M}")
        if len(self) % self.intervals_per_day:
            raise SeriesError(
                f"series length {len(self)} is not a whole number of "
                f"{self.intervals_per_day}-interval days"
            )
        return self.n_days

    def day(self, d: int) -> np.ndarray:
        T = self.intervals_per_day
        return self.values[d * T:(d + 1) * T]

    def weekdays(self) -> list[int]:
        return [(self.start + timedelta(days=d)).weekday() for d in range(self.n_days)]


def _parse_timestamp(text: str, row: int) -> datetime:
    try:
        return datetime.strptime(text.strip(), TIMESTAMP_FORMAT)
    except ValueError:
        raise SeriesError(f"row {row}: bad timestamp {text!r}, expected YYYY-MM-DDTHH:MM") from None


def parse_csv(path: str | os.PathLike, column: str = "kw") -> IntervalSeries:
    """Read a ``timestamp,<column>`` CSV into an :class:`IntervalSeries`.

    Row numbers in error messages count data rows from 1 (the header is not counted).
    The step is taken from the first two timestamps and every later gap must match it.
    """
    if not os.path.exists(path):
        raise SeriesError(f"no such file: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "timestamp" not in reader.fieldnames:
            raise SeriesError(f"{path}: header must contain a 'timestamp' column")
        if column not in reader.fieldnames:
            raise SeriesError(f"{path}: no column {column!r} in header {reader.fieldnames}")
        stamps: list[datetime] = []
        values: list[float] = []
        for row, rec in enumerate(reader, start=1):
            stamps.append(_parse_timestamp(rec["timestamp"] or "", row))
            raw = (rec[column] or "").strip()
            try:
                v = float(raw)
            except ValueError:
                raise SeriesError(f"row {row}: non-numeric value {raw!r}") from None
            if not math.isfinite(v):
                raise SeriesError(f"row {row}: non-finite value {raw!r}")
            if v < 0:
                raise SeriesError(f"row {row}: negative value {v}")
            values.append(v)

    if not values:
        raise SeriesError(f"{path}: no data rows")
    if len(stamps) == 1:
        return IntervalSeries(stamps[0], np.array(values), 15, column)

    step = stamps[1] - stamps[0]
    for row in range(1, len(stamps)):
        gap = stamps[row] - stamps[row - 1]
        if gap != step:
            raise SeriesError(
                f"row {row + 1}: timestamp {stamps[row]:%Y-%m-%dT%H:%M} breaks uniform "
                f"{step} spacing (gap {gap})"
            )
    step_minutes = step.total_seconds() / 60
    if step_minutes <= 0 or step_minutes != int(step_minutes):
        raise SeriesError(f"timestamps must strictly increase by whole minutes, got {step}")
    return IntervalSeries(stamps[0], np.array(values), int(step_minutes), column)


def resample_to_15min(s: IntervalSeries) -> IntervalSeries:
    """Average 1- or 5-minute data into clock-aligned 15-minute windows."""
    if s.step_minutes == 15:
        return s
    if s.step_minutes > 15 or 15 % s.step_minutes:
        raise SeriesError(f"cannot resample {s.step_minutes}-minute data to 15 minutes")
    if s.start.minute % 15:
        raise SeriesError(f"series start {s.start:%H:%M} is not on a 15-minute boundary")
    k = 15 // s.step_minutes
    if len(s) % k:
        raise SeriesError(f"length {len(s)} is not divisible by {k}")
    out = s.values.reshape(-1, k).mean(axis=1)
    return IntervalSeries(s.start, out, 15, s.name)


def write_csv(path: str | os.PathLike, s: IntervalSeries, column: str = "kw") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", column])
        for ts, v in zip(s.timestamps(), s.values):
            w.writerow([ts.strftime(TIMESTAMP_FORMAT), repr(float(v))])


def zeros_like(s: IntervalSeries, name: str = "kw") -> IntervalSeries:
    return IntervalSeries(s.start, np.zeros(len(s)), s.step_minutes, name)
