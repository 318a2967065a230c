"""Stacked recurrent network with dropout and a dense output head."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from ..errors import ConfigError, InputError
from .cells import (GRU_GATES, LSTM_GATES, gru_step, gru_step_backward,
                    lstm_step, lstm_step_backward)

CELL_KINDS = ("gru", "lstm")
HEAD_ACTIVATIONS = ("identity", "relu")


class RecurrentModel:
    """GRU or LSTM layers stacked, then ``Dense(hidden -> 1)``.

    Inverted dropout is applied to every recurrent layer's output during
    training. Weights are Glorot-uniform per gate, biases start at zero.
    Initialization draws from ``SeedSequence([seed, 0])``; training-time
    dropout masks use ``SeedSequence([seed, 1])``.
    """

    def __init__(self, cell: str = "gru", layer_sizes: Sequence[int] = (128, 256), input_dim: int = 1,
                 dropout: float = 0.1, head_activation: str = "identity", seed: int = 0):
        cell = cell.lower()
        if cell not in CELL_KINDS:
            raise ConfigError(f"cell must be one of {CELL_KINDS}, got {cell!r}")
        if head_activation not in HEAD_ACTIVATIONS:
            raise ConfigError(f"head_activation must be one of {HEAD_ACTIVATIONS}")
        if not layer_sizes or min(layer_sizes) < 1 or input_dim < 1:
            raise ConfigError("layer sizes and input_dim must be positive")
        if not 0.0 <= dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        self.cell = cell
        self.layer_sizes = tuple(int(s) for s in layer_sizes)
        self.input_dim = int(input_dim)
        self.dropout = float(dropout)
        self.head_activation = head_activation
        self.seed = int(seed)
        self.params: dict[str, np.ndarray] = {}
        self._init_params(np.random.default_rng(np.random.SeedSequence([self.seed, 0])))

    @property
    def gates(self) -> tuple[str, ...]:
        return GRU_GATES if self.cell == "gru" else LSTM_GATES

    def _init_params(self, rng: np.random.Generator) -> None:
        d = self.input_dim
        for li, H in enumerate(self.layer_sizes):
            limit = np.sqrt(6.0 / (H + d + H))
            for g in self.gates:
                self.params[f"l{li}.W_{g}"] = rng.uniform(-limit, limit, size=(H, H + d))
                self.params[f"l{li}.b_{g}"] = np.zeros(H)
            d = H
        limit = np.sqrt(6.0 / (d + 1))
        self.params["head.W"] = rng.uniform(-limit, limit, size=d)
        self.params["head.b"] = np.zeros(1)

    def layer_params(self, li: int) -> dict[str, np.ndarray]:
        prefix = f"l{li}."
        return {k[len(prefix):]: v for k, v in self.params.items() if k.startswith(prefix)}

    @property
    def n_parameters(self) -> int:
        return sum(v.size for v in self.params.values())

    def config(self) -> dict[str, Any]:
        return {
            "cell": self.cell,
            "layer_sizes": list(self.layer_sizes),
            "input_dim": self.input_dim,
            "dropout": self.dropout,
            "head_activation": self.head_activation,
            "seed": self.seed,
        }

    def zero_(self) -> "RecurrentModel":
        for v in self.params.values():
            v[...] = 0.0
        return self

    # -- forward / backward --------------------------------------------

    def _as_batch(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 2 and self.input_dim == 1:
            X = X[..., None]
        if X.ndim != 3 or X.shape[2] != self.input_dim:
            raise InputError(f"expected windows of shape (batch, steps, {self.input_dim}), got {X.shape}")
        if not np.all(np.isfinite(X)):
            raise InputError("input windows contain non-finite values")
        return X

    def forward_batch(self, X, training: bool = False, rng: np.random.Generator | None = None):
        """Predictions for a batch of windows, plus the cache for ``backward``."""
        X = self._as_batch(X)
        B, T, _ = X.shape
        seq = X
        layers = []
        keep = 1.0 - self.dropout
        for li, H in enumerate(self.layer_sizes):
            p = self.layer_params(li)
            h = np.zeros((B, H))
            c = np.zeros((B, H))
            out = np.empty((B, T, H))
            caches = []
            for t in range(T):
                if self.cell == "gru":
                    h, cache = gru_step(seq[:, t], h, p)
                else:
                    h, c, cache = lstm_step(seq[:, t], h, c, p)
                out[:, t] = h
                caches.append(cache)
            mask = None
            if training and self.dropout > 0:
                mask = (rng.random((B, T, H)) < keep) / keep
                out = out * mask
            layers.append((caches, mask))
            seq = out
        last = seq[:, -1]
        pre = last @ self.params["head.W"] + self.params["head.b"][0]
        y = np.maximum(pre, 0.0) if self.head_activation == "relu" else pre
        return y, (layers, last, pre, T)

    def backward(self, cache, dy) -> dict[str, np.ndarray]:
        """Gradients of a loss with ``d loss / d prediction = dy``."""
        layers, last, pre, T = cache
        grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        dy = np.asarray(dy, dtype=float)
        if self.head_activation == "relu":
            dy = dy * (pre > 0)
        grads["head.W"] += last.T @ dy
        grads["head.b"][0] += dy.sum()
        B = dy.shape[0]
        dseq = np.zeros((B, T, self.layer_sizes[-1]))
        dseq[:, -1] = np.outer(dy, self.params["head.W"])
        for li in reversed(range(len(self.layer_sizes))):
            caches, mask = layers[li]
            if mask is not None:
                dseq = dseq * mask
            p = self.layer_params(li)
            g = {k: grads[f"l{li}.{k}"] for k in p}
            H = self.layer_sizes[li]
            d_in = self.input_dim if li == 0 else self.layer_sizes[li - 1]
            dx_seq = np.zeros((B, T, d_in)) if li > 0 else None
            dh = np.zeros((B, H))
            dc = np.zeros((B, H))
            for t in reversed(range(T)):
                dh = dh + dseq[:, t]
                if self.cell == "gru":
                    dh, dx = gru_step_backward(dh, caches[t], p, g)
                else:
                    dh, dc, dx = lstm_step_backward(dh, dc, caches[t], p, g)
                if dx_seq is not None:
                    dx_seq[:, t] = dx
            dseq = dx_seq
        return grads

    def predict(self, X, batch_size: int = 4096) -> np.ndarray:
        X = self._as_batch(X)
        out = [self.forward_batch(X[i:i + batch_size])[0] for i in range(0, len(X), batch_size)]
        return np.concatenate(out) if out else np.zeros(0)

    # -- persistence ---------------------------------------------------

    def save(self, path: str | Path, extra: dict[str, Any] | None = None) -> None:
        """Store parameters (float64) and config in an ``.npz`` container."""
        meta = {"model": self.config(), "extra": extra or {}}
        with open(path, "wb") as fh:
            np.savez(fh, __meta__=np.array(json.dumps(meta, sort_keys=True)), **self.params)

    @classmethod
    def load(cls, path: str | Path) -> tuple["RecurrentModel", dict[str, Any]]:
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["__meta__"]))
            model = cls(**meta["model"])
            for k in model.params:
                if data[k].shape != model.params[k].shape:
                    raise InputError(f"checkpoint parameter {k} has shape {data[k].shape}")
                model.params[k] = data[k].astype(np.float64)
        return model, meta["extra"]


def forward(model: RecurrentModel, window) -> float:
    """Single-window inference-mode prediction."""
    w = np.asarray(window, dtype=float)
    return float(model.forward_batch(w[None, ...])[0][0])
