"""Fixed-interval transfer-flow series, scenario splitting and seed averages."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta
from pathlib import Path
from typing import Callable, Iterable, Mapping, NamedTuple

import numpy as np

from .errors import InputError, InsufficientHistoryError

WEEKDAY = "weekday_excl_fri"
FRIDAY = "friday"
REST_DAY = "rest_day"
ALL = "all"
SCENARIOS = (WEEKDAY, FRIDAY, REST_DAY)


def parse_clock(text: str) -> timedelta:
    """``"05:30"`` or ``"24:00"`` -> offset from midnight."""
    try:
        hh, mm = text.split(":")[:2]
        off = timedelta(hours=int(hh), minutes=int(mm))
    except (ValueError, AttributeError) as exc:
        raise InputError(f"bad clock time {text!r}") from exc
    if not timedelta(0) <= off <= timedelta(hours=24):
        raise InputError(f"clock time out of range: {text!r}")
    return off


def format_clock(off: timedelta) -> str:
    minutes = int(off.total_seconds() // 60)
    return f"{minutes // 60:02d}:{minutes % 60:02d}"


@dataclass(frozen=True)
class DayWindow:
    """Daily time range as offsets from midnight; ``end`` may be 24:00."""

    start: timedelta = timedelta(hours=5)
    end: timedelta = timedelta(hours=24)

    def __post_init__(self):
        if not self.start < self.end:
            raise InputError("day window must have start < end")

    @classmethod
    def parse(cls, start: str, end: str) -> "DayWindow":
        return cls(parse_clock(start), parse_clock(end))

    @property
    def length(self) -> timedelta:
        return self.end - self.start

    def bins(self, interval: timedelta) -> int:
        n, rem = divmod(self.length, interval)
        if rem:
            raise InputError(f"interval {interval} does not divide day window {self.length}")
        return n

    def contains(self, ts: datetime) -> bool:
        off = ts - datetime.combine(ts.date(), time())
        return self.start <= off < self.end

    def to_strings(self) -> tuple[str, str]:
        return format_clock(self.start), format_clock(self.end)


@dataclass
class FlowSeries:
    """Counts per bin for one station, days concatenated in date order.

    ``counts`` is laid out day by day, ``samples_per_day`` bins per day,
    each day covering ``day_window`` at ``interval`` spacing.
    """

    station: str
    dates: list[date]
    counts: np.ndarray
    interval: timedelta = timedelta(minutes=5)
    day_window: DayWindow = field(default_factory=DayWindow)
    scenario: str = ALL

    def __post_init__(self):
        self.counts = np.asarray(self.counts)
        spd = self.day_window.bins(self.interval)
        if self.counts.shape != (len(self.dates) * spd,):
            raise InputError(f"expected {len(self.dates) * spd} values for {len(self.dates)} days, "
                             f"got shape {self.counts.shape}")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise InputError("dates must be strictly increasing")

    @property
    def samples_per_day(self) -> int:
        return self.day_window.bins(self.interval)

    @property
    def values(self) -> np.ndarray:
        return self.counts

    def __len__(self) -> int:
        return len(self.counts)

    def timestamps(self) -> list[datetime]:
        spd = self.samples_per_day
        return [
            datetime.combine(d, time()) + self.day_window.start + k * self.interval
            for d in self.dates for k in range(spd)
        ]

    def by_day(self) -> np.ndarray:
        """Counts reshaped to (days, samples_per_day)."""
        return self.counts.reshape(len(self.dates), self.samples_per_day)

    def select_days(self, keep: Iterable[date], scenario: str | None = None) -> "FlowSeries":
        keep = set(keep)
        idx = [i for i, d in enumerate(self.dates) if d in keep]
        days = self.by_day()[idx] if idx else np.zeros((0, self.samples_per_day), self.counts.dtype)
        return FlowSeries(self.station, [self.dates[i] for i in idx], days.reshape(-1),
                          self.interval, self.day_window, scenario or self.scenario)

    def padded(self) -> "FlowSeries":
        """Same data on a 00:00-24:00 window, closure bins filled with zero."""
        full = DayWindow(timedelta(0), timedelta(hours=24))
        spd_full = full.bins(self.interval)
        first = self.day_window.start // self.interval
        out = np.zeros((len(self.dates), spd_full), dtype=self.counts.dtype)
        out[:, first:first + self.samples_per_day] = self.by_day()
        return FlowSeries(self.station, list(self.dates), out.reshape(-1), self.interval, full, self.scenario)

    # -- persistence ---------------------------------------------------

    def save(self, path: str | Path, delimiter: str = ",") -> None:
        """Write ``timestamp,count`` rows plus a ``<path>.meta.json`` sidecar."""
        path = Path(path)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
            w.writerow(["timestamp", "count"])
            for ts, c in zip(self.timestamps(), self.counts.tolist()):
                w.writerow([ts.strftime("%Y-%m-%d %H:%M:%S"), c])
        start, end = self.day_window.to_strings()
        meta = {
            "station": self.station,
            "interval_minutes": self.interval.total_seconds() / 60,
            "day_window": [start, end],
            "scenario": self.scenario,
            "dates": [d.isoformat() for d in self.dates],
        }
        with open(sidecar_path(path), "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path, delimiter: str = ",") -> "FlowSeries":
        path = Path(path)
        with open(sidecar_path(path), encoding="utf-8") as fh:
            meta = json.load(fh)
        interval = timedelta(minutes=meta["interval_minutes"])
        window = DayWindow.parse(*meta["day_window"])
        dates = [date.fromisoformat(d) for d in meta["dates"]]
        series = cls(meta["station"], dates, np.zeros(len(dates) * window.bins(interval), dtype=np.int64),
                     interval, window, meta["scenario"])
        expected = series.timestamps()
        counts = []
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh, delimiter=delimiter)
            next(reader)
            for i, row in enumerate(reader):
                if i >= len(expected) or datetime.strptime(row[0], "%Y-%m-%d %H:%M:%S") != expected[i]:
                    raise InputError(f"{path}: row {i + 2} timestamp does not match the sidecar grid")
                counts.append(float(row[1]))
        if len(counts) != len(expected):
            raise InputError(f"{path}: expected {len(expected)} rows, found {len(counts)}")
        arr = np.asarray(counts)
        series.counts = arr.astype(np.int64) if np.all(arr == np.round(arr)) else arr
        return series


def sidecar_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


class Aggregation(NamedTuple):
    series: FlowSeries
    out_of_window: int


def aggregate(events: Iterable, station: str, interval: timedelta = timedelta(minutes=5),
              day_window: DayWindow | None = None, dates: Iterable[date] | None = None) -> Aggregation:
    """Count events at ``station`` in left-closed bins of each day window.

    Events are anything with ``station`` and ``time`` attributes. Days span
    the first to last event date unless ``dates`` is given. Events outside
    the window (or on dates not covered) are tallied in ``out_of_window``.
    """
    day_window = day_window or DayWindow()
    spd = day_window.bins(interval)
    times = [ev.time for ev in events if ev.station == station]
    if dates is None:
        if times:
            first, last = min(times).date(), max(times).date()
            dates = [first + timedelta(days=k) for k in range((last - first).days + 1)]
        else:
            dates = []
    dates = sorted(set(dates))
    day_index = {d: i for i, d in enumerate(dates)}
    counts = np.zeros(len(dates) * spd, dtype=np.int64)
    outside = 0
    for t in times:
        di = day_index.get(t.date())
        off = t - datetime.combine(t.date(), time())
        if di is None or not day_window.start <= off < day_window.end:
            outside += 1
            continue
        counts[di * spd + (off - day_window.start) // interval] += 1
    return Aggregation(FlowSeries(station, dates, counts, interval, day_window), outside)


def day_class(d: date, holidays: Iterable[date] = ()) -> str:
    if d in set(holidays) or d.weekday() >= 5:
        return REST_DAY
    if d.weekday() == 4:
        return FRIDAY
    return WEEKDAY


def default_calendar(dates: Iterable[date], holidays: Iterable[date] = ()) -> dict[date, str]:
    holidays = set(holidays)
    return {d: day_class(d, holidays) for d in dates}


def split_scenarios(series: FlowSeries,
                    calendar: Mapping[date, str] | Callable[[date], str] | None = None) -> dict[str, FlowSeries]:
    """Split a series into weekday (Mon-Thu), Friday and rest-day series."""
    if calendar is None:
        calendar = default_calendar(series.dates)
    lookup = calendar if callable(calendar) else calendar.get
    groups: dict[str, list[date]] = {s: [] for s in SCENARIOS}
    for d in series.dates:
        cls = lookup(d)
        if cls not in groups:
            raise InputError(f"date {d.isoformat()} is not classified into a scenario (got {cls!r})")
        groups[cls].append(d)
    return {s: series.select_days(ds, scenario=s) for s, ds in groups.items()}


def same_period_mean(by_day: np.ndarray, dates: list[date], target: date, slots: slice,
                     lookback_weeks: int = 5) -> np.ndarray:
    """Mean over prior same-weekday days (up to ``lookback_weeks`` back) of ``by_day[:, slots]``."""
    index = {d: i for i, d in enumerate(dates)}
    rows = [index[target - timedelta(weeks=k)] for k in range(1, lookback_weeks + 1)
            if target - timedelta(weeks=k) in index]
    if not rows:
        raise InsufficientHistoryError(f"no prior same-weekday data for {target.isoformat()}")
    return by_day[rows, slots].astype(float).mean(axis=0)


def same_period_average(history: FlowSeries, target_date: date,
                        window: tuple[timedelta, timedelta] | None = None,
                        lookback_weeks: int = 5) -> np.ndarray:
    """Historical same-period average for ``target_date``.

    ``window`` is a (start, end) pair of clock offsets inside the series day
    window; by default the first hour of the day.
    """
    dw = history.day_window
    if window is None:
        window = (dw.start, dw.start + timedelta(hours=1))
    start, end = window
    if not (dw.start <= start < end <= dw.end):
        raise InputError("averaging window must lie inside the series day window")
    a = (start - dw.start) // history.interval
    b = (end - dw.start) // history.interval
    return same_period_mean(history.by_day(), history.dates, target_date, slice(a, b), lookback_weeks)
