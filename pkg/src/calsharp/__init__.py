"""Calibration diagnostics: Bregman calibration/sharpness decompositions,
post-hoc recalibration and calibration-sharpness diagrams."""

from .bregman import BRIER, KL, BregmanSpec, get_spec
from .data import (
    ConfidenceView,
    PredictionSet,
    SplitSpec,
    confidence_view,
    load_predictions,
    save_predictions,
    split,
)
from .decomposition import CurveEstimate, DecompositionReport, decomposition_report, pointwise_sharpness_gap
from .errors import CalsharpError, ParseError, UndefinedEstimateError, ValidationError
from .kernelreg import EstimateWithSpread, KernelSpec, kde, nw_regress
from .metrics import MetricsConfig, MetricsTable, metrics_table, plugin_calibration_error

__version__ = "0.1.0"

__all__ = [
    "BRIER", "KL", "BregmanSpec", "get_spec",
    "ConfidenceView", "PredictionSet", "SplitSpec", "confidence_view",
    "load_predictions", "save_predictions", "split",
    "CurveEstimate", "DecompositionReport", "decomposition_report", "pointwise_sharpness_gap",
    "CalsharpError", "ParseError", "UndefinedEstimateError", "ValidationError",
    "EstimateWithSpread", "KernelSpec", "kde", "nw_regress",
    "MetricsConfig", "MetricsTable", "metrics_table", "plugin_calibration_error",
]
