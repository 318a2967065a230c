import json
import math
from datetime import timedelta

import numpy as np
import pytest

from metroflow.errors import InputError, StageError
from metroflow.flows import SCENARIOS, DayWindow, FlowSeries
from metroflow.neural import TrainingConfig
from metroflow.pipeline import (MODELS, ModelConfig, compare_models, derive_seed, evaluate, run_raw_pipeline,
                                run_stl_pipeline, split_train_test, train_days)
from metroflow.stl import StlParams, null_decomposition
from metroflow.synth import SynthConfig, benchmark_series, generate_series

SMALL = ModelConfig(layer_sizes=(4,), lookback=6)
FAST = TrainingConfig(epochs=2, batch_size=128)
WINDOW = DayWindow.parse("06:00", "12:00")


def small_series(days=10, seed=0):
    cfg = SynthConfig(days=days, day_window=WINDOW, interval=timedelta(minutes=15), seed=seed)
    return generate_series(cfg)[0]


def test_evaluate_hand_values():
    ev = evaluate([100, 200], [110, 180])
    assert ev.mape == 10.0
    assert ev.rmse == pytest.approx(math.sqrt(250), abs=1e-12)
    assert round(ev.rmse, 3) == 15.811


def test_evaluate_zero_actuals():
    ev = evaluate([0, 100, 0], [5, 90, 0])
    assert ev.mape == pytest.approx(10.0)
    assert ev.zero_actuals == 2 and ev.n == 3
    assert ev.rmse == pytest.approx(math.sqrt(125 / 3))
    assert math.isnan(evaluate([0.0], [1.0]).mape)
    with pytest.raises(InputError):
        evaluate([1, 2], [1])
    with pytest.raises(InputError):
        evaluate([], [])


@pytest.mark.parametrize("days,ratio,want", [(20, 0.8, 16), (7, 0.8, 6), (4, 0.8, 3), (2, 0.8, 1),
                                             (5, 0.5, 3), (3, 0.1, 1), (3, 0.99, 2)])
def test_train_days(days, ratio, want):
    assert train_days(days, ratio) == want


def test_train_days_errors():
    with pytest.raises(InputError):
        train_days(1)
    with pytest.raises(InputError):
        train_days(10, 1.0)


def test_split_is_day_aligned():
    s = small_series(10)
    tr, te = split_train_test(s)
    assert len(tr.dates) == 8 and len(te.dates) == 2
    assert tr.dates[-1] < te.dates[0]
    np.testing.assert_array_equal(np.concatenate([tr.counts, te.counts]), s.counts)


def test_derive_seed_streams():
    assert derive_seed(0, "gru", "raw") == derive_seed(0, "gru", "residual")
    seeds = {derive_seed(0, c, k) for c in ("gru", "lstm") for k in ("raw", "trend", "seasonal")}
    assert len(seeds) == 6
    assert derive_seed(1, "gru", "raw") != derive_seed(0, "gru", "raw")


def test_null_decomposition_reproduces_raw_model():
    s = small_series()
    raw = run_raw_pipeline(s, SMALL, FAST, seed=3)
    stl = run_stl_pipeline(s, StlParams(s.samples_per_day), SMALL, FAST, seed=3, repair=False,
                           decompose=lambda y, p: null_decomposition(y, p))
    # trend and seasonal are all-zero, so their models output exactly zero
    np.testing.assert_array_equal(stl.components["residual"].predictions, raw.predictions)
    np.testing.assert_array_equal(stl.predictions, raw.predictions)


def test_stl_pipeline_outputs():
    s = small_series()
    res = run_stl_pipeline(s, None, SMALL, FAST, seed=0)
    n_test = 2 * s.samples_per_day
    assert res.predictions.shape == res.actual.shape == (n_test,)
    assert res.split == 8 * s.samples_per_day
    assert set(res.components) == {"trend", "seasonal", "residual"}
    total = sum(c.predictions for c in res.components.values())
    np.testing.assert_allclose(res.predictions, total)
    assert res.evaluation.prediction_time > 0
    np.testing.assert_allclose(res.decomposition.reconstruct(), s.counts)


def test_pipeline_stage_errors():
    s = small_series()

    def broken(y, p):
        raise FloatingPointError("boom")

    with pytest.raises(StageError) as info:
        run_stl_pipeline(s, None, SMALL, FAST, decompose=broken)
    assert info.value.stage == "decompose"
    with pytest.raises(InputError):
        run_stl_pipeline(s, None, SMALL, FAST, day_start="guess")
    with pytest.raises(StageError):
        run_raw_pipeline(s, ModelConfig(layer_sizes=(4,), lookback=500), FAST)


def test_same_period_day_start_mode():
    s = small_series(21)
    hist = run_raw_pipeline(s, SMALL, FAST, seed=1)
    spa = run_raw_pipeline(s, SMALL, FAST, seed=1, day_start="same_period_average")
    spd = s.samples_per_day
    # only the first lookback bins of each test day see different context
    same = np.ones(len(hist.predictions), bool)
    for d in range(len(hist.predictions) // spd):
        same[d * spd:d * spd + SMALL.lookback] = False
    np.testing.assert_array_equal(hist.predictions[same], spa.predictions[same])
    assert not np.array_equal(hist.predictions, spa.predictions)


def _bench():
    series, _ = generate_series(SynthConfig(days=14, day_window=WINDOW, interval=timedelta(minutes=15)))
    from metroflow.flows import split_scenarios
    return split_scenarios(series)


def test_compare_models_report():
    bench = _bench()
    rep = compare_models(bench, SMALL, FAST, seed=2)
    assert len(rep.cells) == 12
    assert all(c.error is None for c in rep.cells.values())
    doc = json.loads(rep.to_json())
    assert [(c["model"], c["scenario"]) for c in doc["cells"]] == [(m, s) for m in MODELS for s in SCENARIOS]
    assert "prediction_time" not in rep.to_json()
    assert "prediction_time" in rep.to_json(include_timing=True)
    table = rep.to_table()
    assert "STL-GRU" in table and "Rest Days" in table
    again = compare_models(bench, SMALL, FAST, seed=2)
    assert again.to_json() == rep.to_json()


def test_compare_models_records_failed_cells():
    bench = _bench()
    bench["friday"] = bench["friday"].select_days(bench["friday"].dates[:1])  # too short to split
    rep = compare_models(bench, SMALL, FAST, models=("GRU",))
    assert rep.cell("GRU", "friday").error is not None
    assert rep.cell("GRU", "rest_day").error is None
    assert rep.cell("LSTM", "rest_day").error == "not run"
    assert "failed" in rep.to_table()


def test_compare_models_missing_scenario():
    with pytest.raises(InputError):
        compare_models({"friday": small_series()}, SMALL, FAST)


def test_benchmark_series_shape():
    b = benchmark_series()
    assert [len(b[s].dates) for s in SCENARIOS] == [16, 4, 8]
    assert all(b[s].samples_per_day == 228 for s in SCENARIOS)
