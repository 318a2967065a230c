"""Decompose, forecast each component, add the forecasts back up.

One GRU per component (trend, seasonal, repaired residual) against a single
GRU on the raw series, on the Friday slice of the bundled benchmark.
Uses the acceptance configuration (hidden sizes 32 and 64, 30 epochs).
"""
from metroflow import FlowSeries, ModelConfig, run_raw_pipeline, run_stl_pipeline
from metroflow.cli import bundled_benchmark_dir
from metroflow.neural import TrainingConfig

series = FlowSeries.load(bundled_benchmark_dir() / "friday.csv")
print(f"{series.station} {series.scenario}: {len(series.dates)} days x {series.samples_per_day} bins")

model_cfg = ModelConfig(layer_sizes=(32, 64))
train_cfg = TrainingConfig(epochs=30)

raw = run_raw_pipeline(series, model_cfg, train_cfg, seed=0)
stl = run_stl_pipeline(series, None, model_cfg, train_cfg, seed=0)
print(f"GRU      MAPE {raw.evaluation.mape:6.2f}%  RMSE {raw.evaluation.rmse:6.2f}")
print(f"STL-GRU  MAPE {stl.evaluation.mape:6.2f}%  RMSE {stl.evaluation.rmse:6.2f}")
print(f"residual values repaired before training: {len(stl.repaired_indices)}")
for name, comp in stl.components.items():
    print(f"  {name:<9} final training loss {comp.loss_trace[-1]:.4f}")
