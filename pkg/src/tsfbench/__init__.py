"""Benchmark toolkit for channel dependence in multivariate forecasting.

Chaotic ODE data generation, Granger-causality analysis, closed-form linear
forecasters in channel-independent and channel-dependent form, a seeded
lookback-aware tuner and summary reporting.
"""

from .data import (
    DataError,
    Normalizer,
    SplitSpec,
    TimeSeries,
    WindowedDataset,
    apply_normalizer,
    fit_normalizer,
    load_csv,
    make_windows,
    split_series,
    window_count,
)
from .forecasters import (
    FittedForecaster,
    ForecasterSpec,
    fit_linear_forecaster,
    load_model,
    moving_average_decompose,
    predict,
    revin_transform,
    save_model,
)
from .granger import (
    GrangerConfig,
    GrangerReport,
    export_granger_report,
    granger_analyze,
    granger_pair,
)
from .ode import (
    IntegratorConfig,
    OdeSystem,
    channel_surrogate,
    generate_benchmark,
    integrate,
    make_system,
)
from .report import ResultsTable, SummaryReport, export_report, rank_and_wins, summarize
from .tuner import (
    SearchSpace,
    TuneReport,
    export_tune_report,
    prepare_splits,
    run_search,
    sample_trial_config,
)

__version__ = "0.1.0"
