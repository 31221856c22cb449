"""Predictive principal component analysis.

Least-squares prediction of future observations from lag-embedded past
inputs, followed by PCA of the predictions; plus model selection, system
identification, ICA-based categorical rollout and baseline predictors.
"""

from .core import PredModel, encode, fit_batch, fit_online, heldout_loss, predict
from .dataio import LagDataset, TimeSeries, center, lag_embed, load_matrix, save_matrix
from .errors import (
    DataError,
    DimensionError,
    FormatError,
    InputError,
    NumericError,
    ParameterError,
    PredPCAError,
)
from .modelsel import SelectionReport, select, test_error_expectation
from .sysid import SystemEstimate, identify_all

__version__ = "0.1.0"

__all__ = [
    "DataError", "DimensionError", "FormatError", "InputError", "LagDataset", "NumericError",
    "ParameterError", "PredModel", "PredPCAError", "SelectionReport", "SystemEstimate",
    "TimeSeries", "center", "encode", "fit_batch", "fit_online", "heldout_loss",
    "identify_all", "lag_embed", "load_matrix", "predict", "save_matrix", "select",
    "test_error_expectation",
]
