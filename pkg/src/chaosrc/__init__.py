"""Reservoir-computing forecasters for chaotic systems.

Data generators (Lorenz, Kuramoto-Sivashinsky), delay-feature and echo-state
readouts trained by ridge regression, closed-loop prediction, valid-time
scoring and a seeded benchmark harness.
"""

from .errors import (BlowUpError, ChaosRCError, ConfigError, ConvergenceError, DimensionMismatchError,
                     FormatError, SeriesTooShortError, SingularSystemError)
from .features import FeatureConfig, FeatureMap, plan_features
from .metrics import ValidTimeReport, normalized_error, valid_time
from .readout import (EsnConfig, ReadoutModel, esn_predict, esn_train, predict_closed_loop, ridge_solve,
                      train, train_model)
from .timeseries import TimeSeries

__version__ = "0.1.0"

__all__ = [
    "BlowUpError", "ChaosRCError", "ConfigError", "ConvergenceError", "DimensionMismatchError",
    "FormatError", "SeriesTooShortError", "SingularSystemError",
    "FeatureConfig", "FeatureMap", "plan_features",
    "ValidTimeReport", "normalized_error", "valid_time",
    "EsnConfig", "ReadoutModel", "esn_predict", "esn_train", "predict_closed_loop", "ridge_solve",
    "train", "train_model", "TimeSeries",
]
