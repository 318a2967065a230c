"""Mini-batch training, sliding prediction and gradient checking."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigError, InputError, NumericalError
from .data import MinMaxScaler, WindowedDataset, sliding_windows
from .model import RecurrentModel
from .optim import AdamMoments, adam_step

log = logging.getLogger(__name__)

LOSSES = ("mae", "mse")


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 100
    batch_size: int = 256
    learning_rate: float = 0.001
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    loss: str = "mae"
    shuffle_seed: int = 0
    clip_norm: float | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.loss not in LOSSES:
            raise ConfigError(f"loss must be one of {LOSSES}")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise ConfigError("clip_norm must be positive when set")

    def to_dict(self) -> dict:
        return asdict(self)


def loss_and_grad(pred: np.ndarray, target: np.ndarray, kind: str = "mae") -> tuple[float, np.ndarray]:
    """Batch-mean loss and its derivative w.r.t. each prediction.

    MAE uses subgradient 0 where the error is exactly zero.
    """
    err = pred - target
    n = len(err)
    if kind == "mae":
        return float(np.mean(np.abs(err))), np.sign(err) / n
    return float(np.mean(err * err)), 2.0 * err / n


def _clip(grads: dict[str, np.ndarray], max_norm: float) -> None:
    norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm > max_norm:
        for g in grads.values():
            g *= max_norm / norm


def train(model: RecurrentModel, dataset: WindowedDataset, config: TrainingConfig | None = None
          ) -> tuple[RecurrentModel, list[float]]:
    """Fit ``model`` in place; return it with the per-epoch mean loss trace."""
    config = config or TrainingConfig()
    n = len(dataset)
    if n == 0:
        raise InputError("empty dataset")
    X = model._as_batch(dataset.windows)
    y = np.asarray(dataset.targets, dtype=float)
    shuffle_rng = np.random.default_rng(config.shuffle_seed)
    dropout_rng = np.random.default_rng(np.random.SeedSequence([model.seed, 1]))
    moments = AdamMoments()
    trace = []
    step = 0
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n)
        total = 0.0
        for bi, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            pred, cache = model.forward_batch(X[idx], training=True, rng=dropout_rng)
            loss, dpred = loss_and_grad(pred, y[idx], config.loss)
            if not np.isfinite(loss):
                raise NumericalError(f"non-finite loss at epoch {epoch}, batch {bi}")
            grads = model.backward(cache, dpred)
            if config.clip_norm is not None:
                _clip(grads, config.clip_norm)
            step += 1
            adam_step(model.params, grads, moments, step, config.learning_rate,
                      config.adam_beta1, config.adam_beta2, config.adam_epsilon)
            total += loss * len(idx)
        trace.append(total / n)
        log.debug("epoch %d loss %.6g", epoch, trace[-1])
    return model, trace


def predict_series(model: RecurrentModel, series, lookback: int, scaler: MinMaxScaler) -> np.ndarray:
    """One-step-ahead predictions for ``series[lookback:]`` from true history."""
    v = np.asarray(series, dtype=float)
    if len(v) < lookback + 1:
        raise InputError(f"series needs at least {lookback + 1} values, got {len(v)}")
    windows, _ = sliding_windows(scaler.transform(v), lookback)
    return scaler.inverse(model.predict(windows))


def gradient_check(model: RecurrentModel, windows, targets, step: float = 1e-5,
                   kink_tol: float = 1e-3, loss: str = "mae") -> float:
    """Largest relative gap between backprop and central-difference gradients.

    Runs in inference mode (no dropout). Samples whose prediction error is
    within ``kink_tol`` of zero are dropped so MAE stays differentiable.
    Returns ``max |a - n| / max(1e-8, |a| + |n|)`` over all parameters.
    """
    X = model._as_batch(windows)
    y = np.atleast_1d(np.asarray(targets, dtype=float))
    pred, _ = model.forward_batch(X)
    keep = np.abs(pred - y) > kink_tol if loss == "mae" else np.ones(len(y), bool)
    if not keep.any():
        raise InputError("every sample sits on the MAE kink")
    X, y = X[keep], y[keep]

    pred, cache = model.forward_batch(X)
    _, dpred = loss_and_grad(pred, y, loss)
    analytic = model.backward(cache, dpred)

    worst = 0.0
    for k, p in model.params.items():
        flat = p.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            lp = loss_and_grad(model.forward_batch(X)[0], y, loss)[0]
            flat[i] = orig - step
            lm = loss_and_grad(model.forward_batch(X)[0], y, loss)[0]
            flat[i] = orig
            num = (lp - lm) / (2 * step)
            a = analytic[k].reshape(-1)[i]
            worst = max(worst, abs(a - num) / max(1e-8, abs(a) + abs(num)))
    return worst
