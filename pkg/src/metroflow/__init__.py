"""Metro transfer-flow reconstruction from AFC records and STL + recurrent forecasting."""

__version__ = "0.1.0"

from .afc import AfcRecord, AfcSchema, CleaningReport, clean_records, parse_afc_csv, split_by_line_consistency
from .errors import (ConfigError, InputError, InsufficientHistoryError, MetroflowError, NoRouteError,
                     NumericalError, StageError)
from .flows import DayWindow, FlowSeries, aggregate, same_period_average, split_scenarios
from .network import (Itinerary, MetroNetwork, TransferEvent, best_route, enumerate_routes,
                      extract_transfers, transfer_timestamp)
from .pipeline import (ComparisonReport, EvaluationResult, ModelConfig, compare_models, evaluate,
                       run_raw_pipeline, run_stl_pipeline)
from .stl import StlDecomposition, StlParams, loess_smooth, robustness_weights, sigma3_repair, stl_decompose
from .synth import GroundTruth, SynthConfig, benchmark_series, default_network, generate_afc, generate_series

__all__ = [
    "AfcRecord", "AfcSchema", "CleaningReport", "ComparisonReport", "ConfigError", "DayWindow",
    "EvaluationResult", "FlowSeries", "GroundTruth", "InputError", "InsufficientHistoryError", "Itinerary",
    "MetroNetwork", "MetroflowError", "ModelConfig", "NoRouteError", "NumericalError", "StageError",
    "StlDecomposition", "StlParams", "SynthConfig", "TransferEvent", "aggregate", "benchmark_series",
    "best_route", "clean_records", "compare_models", "default_network", "enumerate_routes", "evaluate",
    "extract_transfers", "generate_afc", "generate_series", "loess_smooth", "parse_afc_csv",
    "robustness_weights", "run_raw_pipeline", "run_stl_pipeline", "same_period_average", "sigma3_repair",
    "split_by_line_consistency", "split_scenarios", "stl_decompose", "transfer_timestamp",
]
