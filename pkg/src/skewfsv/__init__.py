"""Bayesian factor stochastic volatility with skew-t errors.

Estimation by MCMC with spike-and-slab skew selection, a full-process
simulator, and a recursive out-of-sample forecasting harness (predictive
densities, VaR backtests, mean-variance portfolios).
"""

from skewfsv.engine import ChainState, DrawStore, run_mcmc, summarize_draws
from skewfsv.forecast import (
    BacktestConfig,
    BacktestReport,
    ForecastMixture,
    build_mixture,
    kupiec_lr,
    lpdr_table,
    optimize_portfolio,
    predictive_log_density,
    recursive_backtest,
    var_quantile,
)
from skewfsv.model import (
    Dataset,
    LatentState,
    LoadingMatrix,
    McmcSettings,
    ModelConfig,
    PriorSet,
    SeriesParams,
    residual_series,
    validate_config,
)
from skewfsv.simulation import SimulationParams, fig_one_cases, simulate, skewness_study

__version__ = "0.1.0"

__all__ = [
    "BacktestConfig",
    "BacktestReport",
    "ChainState",
    "Dataset",
    "DrawStore",
    "ForecastMixture",
    "LatentState",
    "LoadingMatrix",
    "McmcSettings",
    "ModelConfig",
    "PriorSet",
    "SeriesParams",
    "SimulationParams",
    "build_mixture",
    "fig_one_cases",
    "kupiec_lr",
    "lpdr_table",
    "optimize_portfolio",
    "predictive_log_density",
    "recursive_backtest",
    "residual_series",
    "run_mcmc",
    "simulate",
    "skewness_study",
    "summarize_draws",
    "validate_config",
    "var_quantile",
]
