"""Mixture-of-GP volatility modeling with a Pitman-Yor component prior."""

from .backtest import (
    BacktestConfig,
    BacktestReport,
    historical_volatility,
    run_covariance_backtest,
    run_volatility_backtest,
)
from .copula import (
    Clayton,
    Frank,
    Gumbel,
    PairwiseCopulaModel,
    conditional_theta,
    copula_cdf,
    copula_log_density,
    family_from_name,
    predictive_covariance,
    train_pairwise,
)
from .data_io import (
    PriceSeries,
    ReturnSeries,
    load_price_csv,
    prices_from_returns,
    to_log_returns,
    write_price_csv,
)
from .errors import (
    DegenerateMarginalsError,
    DivergedFitError,
    FormatError,
    GarchFitError,
    IllConditionedError,
    InsufficientDataError,
    InvalidArgumentError,
    MgpchError,
    ModelStateError,
    NumericalDomainError,
    QuadratureWarning,
)
from .garch import GarchParams, garch_filter, garch_fit, garch_forecast
from .kernels import Ar1Kernel, RbfKernel, ZeroKernel
from .model import (
    MgpchConfig,
    MgpchModel,
    PredictiveMoments,
    SimulationDraw,
    fit,
    free_energy,
    predict,
    simulate,
)
from .pyp import InnovationPosterior, PypConfig, StickPosterior
from .serialize import load_model, save_model

__version__ = "0.1.0"

__all__ = [
    "Ar1Kernel",
    "BacktestConfig",
    "BacktestReport",
    "Clayton",
    "DegenerateMarginalsError",
    "DivergedFitError",
    "FormatError",
    "Frank",
    "GarchFitError",
    "GarchParams",
    "Gumbel",
    "IllConditionedError",
    "InnovationPosterior",
    "InsufficientDataError",
    "InvalidArgumentError",
    "MgpchConfig",
    "MgpchError",
    "MgpchModel",
    "ModelStateError",
    "NumericalDomainError",
    "PairwiseCopulaModel",
    "PredictiveMoments",
    "PriceSeries",
    "PypConfig",
    "QuadratureWarning",
    "RbfKernel",
    "ReturnSeries",
    "SimulationDraw",
    "StickPosterior",
    "ZeroKernel",
    "conditional_theta",
    "copula_cdf",
    "copula_log_density",
    "family_from_name",
    "fit",
    "free_energy",
    "garch_filter",
    "garch_fit",
    "garch_forecast",
    "historical_volatility",
    "load_model",
    "load_price_csv",
    "predict",
    "predictive_covariance",
    "prices_from_returns",
    "run_covariance_backtest",
    "run_volatility_backtest",
    "save_model",
    "simulate",
    "to_log_returns",
    "train_pairwise",
    "write_price_csv",
]
