"""Stochastic forecasting of weekly mortality rates and excess-death reporting.

A panel of weekly death rates by country, sex and age band is mapped to
logits, decomposed by PCA, and forecast by simulation: the first component
(the mortality index) follows a parametric seasonal trend plus a SARIMA
residual, the remaining components follow random walks. Observed deaths are
then compared with the simulated prediction intervals.
"""

from .errors import ConvergenceError, DataError, NumericalError
from .excess import covid_adjusted_report, excess_report, pc1_tracking
from .ingest import RatePanel, SeriesKey, WeekIndex, parse_rate_panel, read_hmd_stmf
from .model import FittedModel, fit_model, load_model, save_model
from .simulate import ForecastEnsemble, prediction_intervals, simulate_ensemble
from .synthetic import ShockConfig, SynthConfig, generate_synthetic_panel

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError", "DataError", "NumericalError", "RatePanel", "SeriesKey", "WeekIndex",
    "parse_rate_panel", "read_hmd_stmf", "FittedModel", "fit_model", "load_model", "save_model",
    "ForecastEnsemble", "prediction_intervals", "simulate_ensemble", "excess_report",
    "covid_adjusted_report", "pc1_tracking", "ShockConfig", "SynthConfig", "generate_synthetic_panel",
    "__version__",
]
