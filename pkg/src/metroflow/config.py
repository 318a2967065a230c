"""JSON run configuration: defaults, validation and dotted-path overrides."""

from __future__ import annotations

import copy
import json
from pathlib import Path
from typing import Any

from .errors import ConfigError
from .synth import DEFAULT_MULTIPLIERS

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "ingest": {
        "delimiter": ",",
        "time_format": "%Y-%m-%d %H:%M:%S",
        "columns": None,
        "ops_hours": ["05:30", "22:30"],
        "max_trip_hours": 4.0,
    },
    "routes": {"max_transfers": 3, "distance_slack": 0.5},
    "series": {"interval_minutes": 5, "day_window": ["05:00", "24:00"], "holidays": [], "stations": None,
               "pad_overnight": False},
    "stl": {
        "period": None, "n_s": 15, "n_l": 10, "n_t": 20, "n_i": 15, "n_o": 3,
        "convergence_tol": 0.001, "loess_degree": 1, "lowpass_literal": False,
    },
    "model": {"cell": "gru", "layer_sizes": [128, 256], "dropout": 0.1,
              "head_activation": "identity", "lookback": 12},
    "train": {"epochs": 100, "batch_size": 256, "learning_rate": 0.001, "adam_beta1": 0.9,
              "adam_beta2": 0.999, "adam_epsilon": 1e-8, "loss": "mae", "clip_norm": None},
    "pipeline": {"ratio": 0.8, "repair": True, "day_start": "history"},
    "synth": {
        "days": 28, "start_date": "2023-09-04", "trend_slope": 0.002, "noise_level": 0.5,
        "outlier_rate": 0.002, "afc_scale": 0.05, "n_trips": None, "base_rate": None,
        "weekday_multipliers": dict(DEFAULT_MULTIPLIERS), "station": "H1", "detour_prob": 0.0,
    },
}

# types for keys whose default is None
NULLABLE = {
    "ingest.columns": dict,
    "series.stations": list,
    "stl.period": int,
    "train.clip_norm": float,
    "synth.noise_level": float,
    "synth.n_trips": int,
    "synth.base_rate": list,
}


def _type_ok(value: Any, expected: type) -> bool:
    if expected is float:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if expected is int:
        return isinstance(value, int) and not isinstance(value, bool)
    return isinstance(value, expected)


def _merge(base: dict, update: dict, path: str = "") -> None:
    for key, value in update.items():
        dotted = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {dotted!r}")
        default = base[key]
        if isinstance(default, dict) and dotted not in NULLABLE and not dotted.endswith("weekday_multipliers"):
            if not isinstance(value, dict):
                raise ConfigError(f"{dotted}: expected a mapping, got {type(value).__name__}")
            _merge(default, value, dotted + ".")
            continue
        if value is None:
            if dotted not in NULLABLE:
                raise ConfigError(f"{dotted}: null not allowed")
        else:
            expected = NULLABLE.get(dotted, type(default))
            if not _type_ok(value, expected):
                raise ConfigError(f"{dotted}: expected {expected.__name__}, got {type(value).__name__} ({value!r})")
        base[key] = value


def resolve(data: dict[str, Any] | None = None) -> dict[str, Any]:
    cfg = copy.deepcopy(DEFAULTS)
    if data:
        if not isinstance(data, dict):
            raise ConfigError("config root must be a JSON object")
        _merge(cfg, data)
    return cfg


def load_config(path: str | Path | None = None, overrides: list[str] | None = None) -> dict[str, Any]:
    """Defaults, then the JSON file at ``path`` (empty file allowed), then overrides."""
    data: dict[str, Any] = {}
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        if text.strip():
            try:
                data = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    cfg = resolve(data)
    for item in overrides or []:
        apply_override(cfg, item)
    return cfg


def apply_override(cfg: dict[str, Any], item: str) -> None:
    """Apply ``dotted.key=value``; the value is read as JSON, else as a string."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    nested: Any = value
    for part in reversed(key.strip().split(".")):
        nested = {part: nested}
    _merge(cfg, nested)
