"""Seeded synthetic data with known ground truth.

Two generators:

* ``generate_afc`` simulates card swipes on a small metro network and
  records, for every passenger, the true instant they pass each transfer
  station.
* ``generate_series`` builds a transfer-flow series directly from a trend,
  a daily profile, overdispersed count noise and multiplicative spikes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta
from typing import Any, Sequence

import numpy as np

from .afc import AfcRecord
from .errors import ConfigError, InputError
from .flows import ALL, DayWindow, FlowSeries, aggregate, day_class, split_scenarios
from .network import MetroNetwork, RouteCache, TransferEvent, enumerate_routes


def default_network() -> MetroNetwork:
    """Three lines, fifteen stations, two transfer hubs (H1, H2); a tree."""
    lines = {
        "1": ["S01", "S02", "S03", "H1", "S04", "S05"],
        "2": ["S06", "S07", "H1", "S08", "H2", "S09"],
        "3": ["S10", "S11", "H2", "S12", "S13"],
    }
    spacing = [1200.0, 900.0, 1500.0, 1100.0, 800.0, 1300.0]
    dist = {}
    for seq in lines.values():
        for k, (a, b) in enumerate(zip(seq, seq[1:])):
            dist[(a, b)] = spacing[k % len(spacing)]
    return MetroNetwork.from_lines(lines, dist)


def _default_rate(hour: float) -> float:
    return (600.0
            + 3000.0 * np.exp(-((hour - 8.25) / 1.0) ** 2)
            + 2500.0 * np.exp(-((hour - 18.25) / 1.2) ** 2)
            + 800.0 * np.exp(-((hour - 13.0) / 2.5) ** 2))


DEFAULT_BASE_RATE = tuple(round(float(_default_rate(h + 0.5)), 1) for h in range(24))
DEFAULT_MULTIPLIERS = {"weekday_excl_fri": 1.0, "friday": 1.1, "rest_day": 0.7}


@dataclass
class SynthConfig:
    network: MetroNetwork | None = None
    days: int = 28
    start_date: date = date(2023, 9, 4)
    day_window: DayWindow = field(default_factory=DayWindow)
    interval: timedelta = timedelta(minutes=5)
    base_rate: Sequence[float] = DEFAULT_BASE_RATE
    weekday_multipliers: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_MULTIPLIERS))
    trend_slope: float = 0.002
    noise_level: float | None = 0.5
    outlier_rate: float = 0.0
    seed: int = 0
    # AFC-only knobs
    afc_scale: float = 0.05
    n_trips: int | None = None
    od_pairs: Sequence[tuple[str, str]] | None = None
    ops_hours: tuple[time, time] = (time(5, 30), time(22, 30))
    hop_seconds: tuple[float, float] = (90.0, 150.0)
    detour_prob: float = 0.0
    station: str = "H1"

    def __post_init__(self):
        if self.days < 1:
            raise ConfigError("days must be >= 1")
        if len(self.base_rate) != 24 or min(self.base_rate) < 0:
            raise ConfigError("base_rate needs 24 non-negative hourly values")
        if any(v < 0 for v in self.weekday_multipliers.values()):
            raise ConfigError("weekday multipliers must be non-negative")
        if not 0 <= self.outlier_rate <= 0.05:
            raise ConfigError("outlier_rate must lie in [0, 0.05]")
        if self.noise_level is not None and self.noise_level < 0:
            raise ConfigError("noise_level must be >= 0 (or None for no noise)")
        if not 0 <= self.detour_prob <= 1:
            raise ConfigError("detour_prob must lie in [0, 1]")

    @property
    def dates(self) -> list[date]:
        return [self.start_date + timedelta(days=k) for k in range(self.days)]


@dataclass
class GroundTruth:
    trend: np.ndarray | None = None
    seasonal: np.ndarray | None = None
    noise: np.ndarray | None = None
    spikes: list[int] = field(default_factory=list)
    spike_factors: list[float] = field(default_factory=list)
    transfer_counts: dict[str, np.ndarray] = field(default_factory=dict)
    transfer_events: list[TransferEvent] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"spikes": list(map(int, self.spikes)),
                               "spike_factors": [float(f) for f in self.spike_factors]}
        for name in ("trend", "seasonal", "noise"):
            arr = getattr(self, name)
            if arr is not None:
                out[name] = arr.tolist()
        if self.transfer_counts:
            out["transfer_counts"] = {k: v.tolist() for k, v in self.transfer_counts.items()}
            out["total_transfer_events"] = len(self.transfer_events)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


# ---------------------------------------------------------------------------
# Flow series
# ---------------------------------------------------------------------------

def daily_profile(config: SynthConfig) -> np.ndarray:
    """Expected counts per bin for a multiplier-1 day."""
    spd = config.day_window.bins(config.interval)
    centers = (config.day_window.start + (np.arange(spd) + 0.5) * config.interval)
    hours = np.array([c.total_seconds() / 3600 for c in centers])
    per_bin = config.interval / timedelta(hours=1)
    rate = np.interp(hours, np.arange(24) + 0.5, np.asarray(config.base_rate, float))
    return rate * per_bin


def _draw_counts(mu: np.ndarray, noise_level: float | None, rng: np.random.Generator) -> np.ndarray:
    mu = np.maximum(mu, 0.0)
    if noise_level is None:
        return np.round(mu)
    if noise_level == 0:
        return rng.poisson(mu).astype(float)
    # negative binomial with variance mu * (1 + noise_level)
    n = np.maximum(mu / noise_level, 1e-12)
    p = 1.0 / (1.0 + noise_level)
    return np.where(mu > 0, rng.negative_binomial(n, p), 0).astype(float)


def generate_series(config: SynthConfig | None = None) -> tuple[FlowSeries, GroundTruth]:
    """Synthetic transfer-flow series ``round(max(0, trend + seasonal + noise))``.

    ``noise_level=None`` gives a noiseless series, 0 Poisson counts, and
    larger values negative-binomial counts with variance mean * (1 + level).
    """
    config = config or SynthConfig()
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 11]))
    spd = config.day_window.bins(config.interval)
    profile = daily_profile(config)
    dates = config.dates
    n = spd * len(dates)
    t_days = np.arange(n) / spd
    trend = float(profile.mean()) * config.trend_slope * t_days
    mult = np.repeat([config.weekday_multipliers[day_class(d)] for d in dates], spd)
    seasonal = np.tile(profile, len(dates)) * mult
    mu = trend + seasonal
    counts = _draw_counts(mu, config.noise_level, rng)
    noise = counts - mu
    n_spikes = int(round(config.outlier_rate * n))
    spikes = np.sort(rng.choice(n, size=n_spikes, replace=False)) if n_spikes else np.zeros(0, int)
    factors = rng.uniform(5.0, 15.0, size=n_spikes)
    for i, f in zip(spikes, factors):
        counts[i] = np.round(max(counts[i], mu[i], 1.0) * f)
    series = FlowSeries(config.station, dates, counts.astype(np.int64), config.interval,
                        config.day_window, ALL)
    truth = GroundTruth(trend, seasonal, noise, spikes.tolist(), factors.tolist())
    return series, truth


def benchmark_series(seed: int = 2020, weeks: int = 4, noise_level: float | None = 0.5,
                     outlier_rate: float = 0.002) -> dict[str, FlowSeries]:
    """The bundled benchmark: ``weeks`` weeks split into the three scenarios."""
    series, _ = generate_series(SynthConfig(days=7 * weeks, noise_level=noise_level,
                                            outlier_rate=outlier_rate, seed=seed))
    return split_scenarios(series)


# ---------------------------------------------------------------------------
# AFC records
# ---------------------------------------------------------------------------

def _check_unique(net: MetroNetwork, od: tuple[str, str]) -> None:
    routes = enumerate_routes(net, od[0], od[1], distance_slack=0.0)
    if len(routes) > 1:
        raise InputError(f"OD pair {od} has {len(routes)} equally short routes; truth would be ambiguous")


def generate_afc(config: SynthConfig | None = None) -> tuple[list[AfcRecord], GroundTruth]:
    """Synthetic swipe records and the true transfer events behind them.

    Each passenger rides a constant time per hop, so the true instant at a
    transfer station is ``t_on + hops_before * hop_time``. Swipes are rounded
    to whole seconds. Trips that would end after closing are not generated.
    """
    config = config or SynthConfig()
    net = config.network or default_network()
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 22]))
    cache = RouteCache(net)
    codes = sorted(net.stations)
    if config.od_pairs is not None:
        pairs = [tuple(p) for p in config.od_pairs]
    else:
        pairs = [(a, b) for a in codes for b in codes if a != b]
    for od in pairs:
        if od[0] not in net or od[1] not in net:
            raise InputError(f"OD pair {od} uses unknown stations")
    if config.detour_prob == 0:
        for od in pairs:
            _check_unique(net, od)

    open_s = config.ops_hours[0].hour * 3600 + config.ops_hours[0].minute * 60
    close_s = config.ops_hours[1].hour * 3600 + config.ops_hours[1].minute * 60
    rates = np.asarray(config.base_rate, float) * config.afc_scale
    # departure slots: (day, second-of-day start, length, expected trips)
    slots = []
    for d in config.dates:
        m = config.weekday_multipliers[day_class(d)]
        for hr in range(24):
            lo, hi = max(hr * 3600, open_s), min((hr + 1) * 3600, close_s)
            if hi > lo:
                slots.append((d, lo, hi - lo, rates[hr] * m * (hi - lo) / 3600))
    expected = np.array([s[3] for s in slots])
    if config.n_trips is not None:
        if expected.sum() <= 0:
            raise ConfigError("n_trips given but the rate profile is all zero")
        per_slot = rng.multinomial(config.n_trips, expected / expected.sum())
    else:
        per_slot = rng.poisson(expected)

    records: list[AfcRecord] = []
    events: list[TransferEvent] = []
    card_types = ("adult", "student", "senior")
    serial = 0
    for (d, lo, length, _), k in zip(slots, per_slot):
        midnight = datetime.combine(d, time())
        for _ in range(int(k)):
            o, dst = pairs[rng.integers(len(pairs))]
            route = cache.get(o, dst)
            if route is None:
                continue
            if config.detour_prob > 0 and rng.random() < config.detour_prob:
                options = enumerate_routes(net, o, dst, distance_slack=0.5)
                route = options[rng.integers(len(options))]
            hop = rng.uniform(*config.hop_seconds)
            dep = lo + rng.uniform(0, length)
            t_on_s = int(dep)
            ride = route.hops * hop
            t_off_s = int(round(t_on_s + ride))
            if t_off_s > close_s or t_off_s <= t_on_s:
                continue
            serial += 1
            card = f"{10000000 + serial}"
            first_line = route.legs[0][0]
            last_line = route.legs[-1][0]
            records.append(AfcRecord(card, first_line, o, midnight + timedelta(seconds=t_on_s),
                                     last_line, dst, midnight + timedelta(seconds=t_off_s),
                                     card_types[rng.integers(3)]))
            for tr in route.transfers:
                when = midnight + timedelta(seconds=t_on_s + tr.n_before * hop)
                events.append(TransferEvent(tr.station, tr.n_before, tr.n_after, when, card))

    truth = GroundTruth(transfer_events=events)
    for st in net.transfer_stations:
        agg = aggregate(events, st, config.interval, config.day_window, config.dates)
        truth.transfer_counts[st] = agg.series.counts
    return records, truth
