"""Sliding windows and min-max scaling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InputError


@dataclass(frozen=True)
class MinMaxScaler:
    """Maps ``[lo, hi]`` onto ``[0, 1]``.

    A constant fit (``hi == lo``) maps everything to 0 and inverts to the
    constant, whatever the model outputs.
    """

    lo: float
    hi: float

    @classmethod
    def fit(cls, values) -> "MinMaxScaler":
        v = np.asarray(values, dtype=float)
        if v.size == 0:
            raise InputError("cannot fit a scaler on no data")
        return cls(float(v.min()), float(v.max()))

    @property
    def span(self) -> float:
        return self.hi - self.lo

    def transform(self, values) -> np.ndarray:
        v = np.asarray(values, dtype=float)
        if self.span == 0:
            return v - self.lo
        return (v - self.lo) / self.span

    def inverse(self, values) -> np.ndarray:
        v = np.asarray(values, dtype=float)
        if self.span == 0:
            return np.full_like(v, self.lo)
        return v * self.span + self.lo


@dataclass
class WindowedDataset:
    windows: np.ndarray
    targets: np.ndarray
    lookback: int
    scaler: MinMaxScaler

    def __len__(self) -> int:
        return len(self.targets)


def sliding_windows(values, lookback: int) -> tuple[np.ndarray, np.ndarray]:
    """All ``(values[i:i+lookback], values[i+lookback])`` pairs."""
    v = np.asarray(values, dtype=float)
    if lookback < 1:
        raise InputError("lookback must be >= 1")
    if len(v) <= lookback:
        raise InputError(f"need more than {lookback} values, got {len(v)}")
    windows = np.lib.stride_tricks.sliding_window_view(v[:-1], lookback).copy()
    return windows, v[lookback:].copy()


def make_dataset(values, lookback: int = 12, scaler: MinMaxScaler | None = None) -> WindowedDataset:
    """Scale (fitting on ``values`` unless a scaler is given) and window."""
    scaler = scaler or MinMaxScaler.fit(values)
    windows, targets = sliding_windows(scaler.transform(values), lookback)
    return WindowedDataset(windows, targets, lookback, scaler)
