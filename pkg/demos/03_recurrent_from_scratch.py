"""GRU and LSTM networks in plain numpy.

Backpropagation through time is written by hand, so the first thing to do
is compare it with finite differences. Then a small GRU learns a noisy
daily cycle one step ahead.
"""
import numpy as np

from metroflow.neural import RecurrentModel, TrainingConfig, gradient_check, make_dataset, predict_series, train

rng = np.random.default_rng(0)
X, y = rng.uniform(size=(6, 10)), rng.uniform(size=6)
for cell in ("gru", "lstm"):
    m = RecurrentModel(cell, (4, 5), dropout=0.0, seed=2)
    print(f"{cell}: {m.n_parameters} parameters, gradient check {gradient_check(m, X, y):.1e}")

t = np.arange(24 * 40)
values = 100 + 60 * np.sin(2 * np.pi * t / 24) + rng.normal(0, 5, len(t))
train_part, test_part = values[:24 * 32], values[24 * 32 - 12:]
ds = make_dataset(train_part, lookback=12)
model = RecurrentModel("gru", (16, 32), dropout=0.1, seed=0)
model, trace = train(model, ds, TrainingConfig(epochs=40, batch_size=64, learning_rate=0.005))
print(f"\nMAE loss (scaled): epoch 1 {trace[0]:.3f} -> epoch {len(trace)} {trace[-1]:.3f}")
pred = predict_series(model, test_part, 12, ds.scaler)
print(f"test MAE {np.mean(np.abs(pred - test_part[12:])):.2f} (noise sd 5)")
