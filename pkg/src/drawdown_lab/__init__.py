"""Cross-sectional forward maximum-drawdown forecasting toolkit."""

from .base import BaseEstimator, ConvergenceError
from .decompose import PartialLeastSquaresRegression, PrincipalComponentRegression
from .drawdown import DrawdownTarget, PriceSeries, forward_mdd_panel, max_drawdown
from .evaluate import (
    ImportanceEntry,
    MetricReport,
    concordance_correlation,
    mean_absolute_error,
    metric_report,
    per_date_metrics,
    permutation_importance,
    quantile_analysis,
)
from .experiment import (
    ExperimentConfig,
    SplitSpec,
    load_config,
    load_model,
    run_experiment,
    save_model,
    tune,
)
from .linear import (
    ElasticNetRegression,
    LassoRegression,
    LinearRegression,
    RidgeRegression,
)
from .mlp import MLPRegressor
from .panel import FeatureSpec, MonthStamp, PanelDataset, load_panel_csv, save_panel_csv
from .synthetic import SyntheticSpec, generate_world, write_world
from .trees import DecisionTreeRegressor, GradientBoostingRegressor, RandomForestRegressor

__version__ = "0.1.0"

__all__ = [
    "BaseEstimator",
    "ConvergenceError",
    "DecisionTreeRegressor",
    "DrawdownTarget",
    "ElasticNetRegression",
    "ExperimentConfig",
    "FeatureSpec",
    "GradientBoostingRegressor",
    "ImportanceEntry",
    "LassoRegression",
    "LinearRegression",
    "MLPRegressor",
    "MetricReport",
    "MonthStamp",
    "PanelDataset",
    "PartialLeastSquaresRegression",
    "PriceSeries",
    "PrincipalComponentRegression",
    "RandomForestRegressor",
    "RidgeRegression",
    "SplitSpec",
    "SyntheticSpec",
    "concordance_correlation",
    "forward_mdd_panel",
    "generate_world",
    "load_config",
    "load_model",
    "load_panel_csv",
    "max_drawdown",
    "mean_absolute_error",
    "metric_report",
    "per_date_metrics",
    "permutation_importance",
    "quantile_analysis",
    "run_experiment",
    "save_model",
    "save_panel_csv",
    "tune",
    "write_world",
]
