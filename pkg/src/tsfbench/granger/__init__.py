"""Granger channel-dependence analysis."""

from .adf import adf_critical_value, adf_test, schwert_lags, SingularRegressionError
from .causality import (
    GrangerConfig,
    GrangerError,
    GrangerReport,
    NonStationaryError,
    PairResult,
    build_lag_design,
    export_granger_report,
    granger_analyze,
    granger_pair,
    load_granger_report,
    make_stationary,
    ols_fit_ssr,
    pearson_filter,
)
from .fdist import betainc_reg, f_upper_tail

__all__ = [
    "GrangerConfig", "GrangerError", "GrangerReport", "NonStationaryError", "PairResult",
    "SingularRegressionError", "adf_critical_value", "adf_test", "betainc_reg",
    "build_lag_design", "export_granger_report", "f_upper_tail", "granger_analyze",
    "granger_pair", "load_granger_report", "make_stationary", "ols_fit_ssr",
    "pearson_filter", "schwert_lags",
]
