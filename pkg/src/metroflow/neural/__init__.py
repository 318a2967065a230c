"""Recurrent networks written directly against numpy."""

from .cells import gru_cell_forward, lstm_cell_forward, sigmoid
from .data import MinMaxScaler, WindowedDataset, make_dataset, sliding_windows
from .model import RecurrentModel, forward
from .optim import AdamMoments, adam_step
from .train import TrainingConfig, gradient_check, predict_series, train

__all__ = [
    "AdamMoments", "MinMaxScaler", "RecurrentModel", "TrainingConfig", "WindowedDataset",
    "adam_step", "forward", "gradient_check", "gru_cell_forward", "lstm_cell_forward",
    "make_dataset", "predict_series", "sigmoid", "sliding_windows", "train",
]
