"""Decompose-predict-reconstruct forecasting and the four-model comparison."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import time as _time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Callable, Sequence

import numpy as np

from .errors import InputError, InsufficientHistoryError, StageError
from .flows import SCENARIOS, FlowSeries, same_period_mean
from .neural import MinMaxScaler, RecurrentModel, TrainingConfig, sliding_windows, train
from .neural.data import WindowedDataset
from .stl import StlDecomposition, StlParams, null_decomposition, sigma3_repair, stl_decompose

log = logging.getLogger(__name__)

MODELS = ("LSTM", "GRU", "STL-LSTM", "STL-GRU")
COMPONENTS = ("trend", "seasonal", "residual")
# component streams; the residual shares the raw stream so a degenerate
# (0, 0, Y) decomposition reproduces the raw model exactly
COMPONENT_STREAM = {"raw": 0, "residual": 0, "trend": 1, "seasonal": 2}
CELL_STREAM = {"gru": 0, "lstm": 1}
DAY_START_MODES = ("history", "same_period_average")


def derive_seed(master: int, cell: str, component: str) -> int:
    """Deterministic model seed for one (cell kind, component) stream."""
    ss = np.random.SeedSequence([int(master), CELL_STREAM[cell], COMPONENT_STREAM[component]])
    return int(ss.generate_state(1)[0] & 0x7FFFFFFF)


@dataclass(frozen=True)
class ModelConfig:
    cell: str = "gru"
    layer_sizes: tuple[int, ...] = (128, 256)
    dropout: float = 0.1
    head_activation: str = "identity"
    lookback: int = 12

    def build(self, seed: int) -> RecurrentModel:
        return RecurrentModel(self.cell, self.layer_sizes, 1, self.dropout, self.head_activation, seed)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["layer_sizes"] = list(self.layer_sizes)
        return d


# ---------------------------------------------------------------------------
# Splitting and metrics
# ---------------------------------------------------------------------------

def train_days(n_days: int, ratio: float = 0.8) -> int:
    """Number of leading days used for training (at least one each side)."""
    if not 0 < ratio < 1:
        raise InputError("ratio must lie in (0, 1)")
    if n_days < 2:
        raise InputError(f"need at least 2 days to split, got {n_days}")
    k = int(math.floor(ratio * n_days + 0.5))
    return min(max(k, 1), n_days - 1)


def split_train_test(series: FlowSeries, ratio: float = 0.8) -> tuple[FlowSeries, FlowSeries]:
    """Chronological, day-aligned split."""
    k = train_days(len(series.dates), ratio)
    return series.select_days(series.dates[:k]), series.select_days(series.dates[k:])


@dataclass
class EvaluationResult:
    mape: float
    rmse: float
    n: int
    zero_actuals: int = 0
    prediction_time: float | None = None

    def to_dict(self, include_timing: bool = True) -> dict[str, Any]:
        d = {"mape": self.mape, "rmse": self.rmse, "n": self.n, "zero_actuals": self.zero_actuals}
        if include_timing:
            d["prediction_time"] = self.prediction_time
        return d


def evaluate(actual, predicted, prediction_time: float | None = None) -> EvaluationResult:
    """MAPE (percent, over non-zero actuals) and RMSE (over all points)."""
    y = np.asarray(actual, dtype=float)
    yh = np.asarray(predicted, dtype=float)
    if y.shape != yh.shape or y.ndim != 1:
        raise InputError(f"actual {y.shape} and predicted {yh.shape} must be equal-length 1-d")
    if len(y) == 0:
        raise InputError("nothing to evaluate")
    nz = y != 0
    mape = float(np.mean(np.abs((y[nz] - yh[nz]) / y[nz])) * 100.0) if nz.any() else math.nan
    rmse = float(np.sqrt(np.mean((y - yh) ** 2)))
    return EvaluationResult(mape, rmse, len(y), int((~nz).sum()), prediction_time)


# ---------------------------------------------------------------------------
# Component forecasting
# ---------------------------------------------------------------------------

@dataclass
class ComponentForecast:
    name: str
    predictions: np.ndarray
    scaler: MinMaxScaler
    loss_trace: list[float]
    model: RecurrentModel
    inference_time: float


def _test_windows(values: np.ndarray, split: int, lookback: int, spd: int,
                  seeds: dict[int, np.ndarray]) -> np.ndarray:
    """Windows for targets ``split..N-1``; day starts listed in ``seeds`` get
    their pre-opening context replaced by the seed values."""
    windows = np.lib.stride_tricks.sliding_window_view(values[split - lookback:-1], lookback).copy()
    for day_start, seed in seeds.items():
        for j in range(min(lookback, len(values) - day_start)):
            row = day_start + j - split
            windows[row, :lookback - j] = seed[j:]
    return windows


def forecast_component(name: str, values: np.ndarray, split: int, model_cfg: ModelConfig,
                       train_cfg: TrainingConfig, seed: int, spd: int,
                       seeds: dict[int, np.ndarray] | None = None) -> ComponentForecast:
    """Train on ``values[:split]`` and predict ``values[split:]`` one step ahead."""
    L = model_cfg.lookback
    if split <= L:
        raise InputError(f"training span ({split}) must exceed the lookback ({L})")
    scaler = MinMaxScaler.fit(values[:split])
    scaled = scaler.transform(values)
    windows, targets = sliding_windows(scaled[:split], L)
    model = model_cfg.build(seed)
    _, trace = train(model, WindowedDataset(windows, targets, L, scaler),
                     replace(train_cfg, shuffle_seed=seed))
    scaled_seeds = {k: scaler.transform(v) for k, v in (seeds or {}).items()}
    t0 = _time.perf_counter()
    test_windows = _test_windows(scaled, split, L, spd, scaled_seeds)
    preds = scaler.inverse(model.predict(test_windows))
    elapsed = _time.perf_counter() - t0
    return ComponentForecast(name, preds, scaler, trace, model, elapsed)


def _day_start_seeds(values: np.ndarray, series: FlowSeries, split_day: int, lookback: int) -> dict[int, np.ndarray]:
    """Same-period averages standing in for the context before each test day opens."""
    spd = series.samples_per_day
    by_day = values.reshape(len(series.dates), spd)
    seeds = {}
    for di in range(split_day, len(series.dates)):
        try:
            seeds[di * spd] = same_period_mean(by_day, series.dates, series.dates[di], slice(0, lookback))
        except InsufficientHistoryError:
            log.debug("no same-weekday history for %s, keeping observed context", series.dates[di])
    return seeds


@dataclass
class PipelineResult:
    predictions: np.ndarray
    actual: np.ndarray
    evaluation: EvaluationResult
    decomposition: StlDecomposition | None = None
    repaired_indices: list[int] = field(default_factory=list)
    components: dict[str, ComponentForecast] = field(default_factory=dict)
    split: int = 0


def _stage(name: str, fn: Callable, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def _prepare(series: FlowSeries, ratio: float, lookback: int) -> tuple[np.ndarray, int, int]:
    y = np.asarray(series.counts, dtype=float)
    k = train_days(len(series.dates), ratio)
    return y, k, k * series.samples_per_day


def run_stl_pipeline(series: FlowSeries, stl_params: StlParams | None = None,
                     model_cfg: ModelConfig | None = None, train_cfg: TrainingConfig | None = None,
                     seed: int = 0, ratio: float = 0.8, repair: bool = True,
                     day_start: str = "history",
                     decompose: Callable[[np.ndarray, StlParams], StlDecomposition] = stl_decompose,
                     ) -> PipelineResult:
    """Decompose, repair residual outliers, forecast each component, sum, evaluate.

    The decomposition runs on the full series; models see only the training
    days. Each component gets its own model with a seed derived from
    ``seed``. Reported prediction time covers decomposition plus inference.
    """
    model_cfg = model_cfg or ModelConfig()
    train_cfg = train_cfg or TrainingConfig()
    if day_start not in DAY_START_MODES:
        raise InputError(f"day_start must be one of {DAY_START_MODES}")
    spd = series.samples_per_day
    y, k, split = _stage("split", _prepare, series, ratio, model_cfg.lookback)
    stl_params = stl_params or StlParams(period=spd)

    t0 = _time.perf_counter()
    dec = _stage("decompose", decompose, y, stl_params)
    decompose_time = _time.perf_counter() - t0
    residual, repaired = dec.residual, []
    if repair:
        residual, repaired = _stage("repair", sigma3_repair, dec.residual, spd)
    parts = {"trend": dec.trend, "seasonal": dec.seasonal, "residual": residual}

    forecasts = {}
    for name in COMPONENTS:
        values = parts[name]
        seeds = _day_start_seeds(values, series, k, model_cfg.lookback) if day_start != "history" else None
        forecasts[name] = _stage(f"forecast:{name}", forecast_component, name, values, split, model_cfg,
                                 train_cfg, derive_seed(seed, model_cfg.cell, name), spd, seeds)
    pred = forecasts["trend"].predictions + forecasts["seasonal"].predictions + forecasts["residual"].predictions
    elapsed = decompose_time + sum(f.inference_time for f in forecasts.values())
    ev = _stage("evaluate", evaluate, y[split:], pred, elapsed)
    return PipelineResult(pred, y[split:], ev, dec, repaired, forecasts, split)


def run_raw_pipeline(series: FlowSeries, model_cfg: ModelConfig | None = None,
                     train_cfg: TrainingConfig | None = None, seed: int = 0, ratio: float = 0.8,
                     day_start: str = "history") -> PipelineResult:
    """Same split, windows and evaluation as the STL pipeline, on the raw series."""
    model_cfg = model_cfg or ModelConfig()
    train_cfg = train_cfg or TrainingConfig()
    if day_start not in DAY_START_MODES:
        raise InputError(f"day_start must be one of {DAY_START_MODES}")
    y, k, split = _stage("split", _prepare, series, ratio, model_cfg.lookback)
    seeds = _day_start_seeds(y, series, k, model_cfg.lookback) if day_start != "history" else None
    fc = _stage("forecast:raw", forecast_component, "raw", y, split, model_cfg, train_cfg,
                derive_seed(seed, model_cfg.cell, "raw"), series.samples_per_day, seeds)
    ev = _stage("evaluate", evaluate, y[split:], fc.predictions, fc.inference_time)
    return PipelineResult(fc.predictions, y[split:], ev, None, [], {"raw": fc}, split)


# ---------------------------------------------------------------------------
# Four-model comparison
# ---------------------------------------------------------------------------

@dataclass
class CellResult:
    model: str
    scenario: str
    evaluation: EvaluationResult | None = None
    error: str | None = None
    predictions: np.ndarray | None = None
    actual: np.ndarray | None = None


@dataclass
class ComparisonReport:
    cells: dict[tuple[str, str], CellResult]
    config: dict[str, Any]
    seed: int

    @property
    def fingerprint(self) -> str:
        blob = json.dumps(self.config, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def cell(self, model: str, scenario: str) -> CellResult:
        return self.cells[(model, scenario)]

    def to_dict(self, include_timing: bool = False) -> dict[str, Any]:
        rows = []
        for m in MODELS:
            for s in SCENARIOS:
                c = self.cells[(m, s)]
                row: dict[str, Any] = {"model": m, "scenario": s}
                if c.evaluation is not None:
                    row.update(c.evaluation.to_dict(include_timing))
                if c.error is not None:
                    row["error"] = c.error
                rows.append(row)
        return {"seed": self.seed, "config_fingerprint": self.fingerprint,
                "config": self.config, "cells": rows}

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(self.to_dict(include_timing), indent=2, sort_keys=True) + "\n"

    def to_table(self) -> str:
        labels = {"weekday_excl_fri": "Weekdays (excl. Fri)", "friday": "Friday", "rest_day": "Rest Days"}
        lines = [f"{'Model':<9} {'Scenario':<21} {'E1 (%)':>8} {'E2':>9} {'Prediction Time (s)':>20}"]
        for m in MODELS:
            for i, s in enumerate(SCENARIOS):
                c = self.cells[(m, s)]
                name = m if i == 0 else ""
                if c.evaluation is None:
                    lines.append(f"{name:<9} {labels[s]:<21} {'failed: ' + str(c.error)}")
                    continue
                ev = c.evaluation
                t = f"{ev.prediction_time:.2f}" if ev.prediction_time is not None else "-"
                lines.append(f"{name:<9} {labels[s]:<21} {ev.mape:>8.2f} {ev.rmse:>9.2f} {t:>20}")
        return "\n".join(lines) + "\n"


def _run_cell(args) -> CellResult:
    model, scenario, series, stl_params, model_cfg, train_cfg, seed, ratio, day_start, repair = args
    cell = "gru" if model.endswith("GRU") else "lstm"
    cfg = replace(model_cfg, cell=cell)
    try:
        if model.startswith("STL"):
            res = run_stl_pipeline(series, stl_params, cfg, train_cfg, seed, ratio, repair, day_start)
        else:
            res = run_raw_pipeline(series, cfg, train_cfg, seed, ratio, day_start=day_start)
    except Exception as exc:  # recorded in the cell, the rest keeps going
        log.warning("cell %s/%s failed: %s", model, scenario, exc)
        return CellResult(model, scenario, error=f"{type(exc).__name__}: {exc}")
    return CellResult(model, scenario, res.evaluation, None, res.predictions, res.actual)


def compare_models(series_by_scenario: dict[str, FlowSeries], model_cfg: ModelConfig | None = None,
                   train_cfg: TrainingConfig | None = None, seed: int = 0,
                   stl_params: dict[str, StlParams] | StlParams | None = None, ratio: float = 0.8,
                   models: Sequence[str] = MODELS, day_start: str = "history", jobs: int = 1,
                   repair: bool = True) -> ComparisonReport:
    """Run every model on every scenario and collect the error table."""
    model_cfg = model_cfg or ModelConfig()
    train_cfg = train_cfg or TrainingConfig()
    missing = [s for s in SCENARIOS if s not in series_by_scenario]
    if missing:
        raise InputError(f"missing scenario series: {missing}")

    def params_for(s: str) -> StlParams:
        if isinstance(stl_params, dict):
            return stl_params[s]
        return stl_params or StlParams(period=series_by_scenario[s].samples_per_day)

    jobs_args = [(m, s, series_by_scenario[s], params_for(s), model_cfg, train_cfg, seed, ratio, day_start, repair)
                 for m in models for s in SCENARIOS]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell, jobs_args))
    else:
        results = [_run_cell(a) for a in jobs_args]
    cells = {(r.model, r.scenario): r for r in results}
    for m in MODELS:
        for s in SCENARIOS:
            cells.setdefault((m, s), CellResult(m, s, error="not run"))
    config = {
        "model": model_cfg.to_dict(),
        "train": train_cfg.to_dict(),
        "stl": {s: params_for(s).to_dict() for s in SCENARIOS},
        "ratio": ratio,
        "day_start": day_start,
        "repair": repair,
    }
    return ComparisonReport(cells, config, seed)


__all__ = [
    "MODELS", "ComparisonReport", "CellResult", "EvaluationResult", "ModelConfig", "PipelineResult",
    "compare_models", "derive_seed", "evaluate", "forecast_component", "null_decomposition",
    "run_raw_pipeline", "run_stl_pipeline", "split_train_test", "train_days",
]
