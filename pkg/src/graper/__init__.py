"""graper: group-adaptive Bayesian penalized regression.

Spike-and-slab linear and logistic regression whose slab precisions and
inclusion fractions are learned per feature group, fitted by
coordinate-ascent variational inference.
"""

from .core import (
    Dataset,
    ExpectationBundle,
    FitSummary,
    GroupPartition,
    HyperPriors,
    VariationalState,
    expected_values,
)
from .estimators import GraperClassifier, GraperRegressor
from .exceptions import GraperError, InputError, NumericalError
from .linear import FitConfig, fit_linear, predict_linear
from .logistic import fit_logistic, predict_logistic, sigmoid_lower_bound
from .multivariate import MultivariateState, fit_linear_multivariate, posterior_beta
from .preprocess import PreprocessTransform, groups_from_covariate, standardize
from .simulate import (
    GroundTruth,
    SimulationConfig,
    benchmark_runtime,
    cross_validate,
    evaluate,
    run_grid,
    simulate_dataset,
)
from .special import digamma

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "ExpectationBundle",
    "FitConfig",
    "FitSummary",
    "GraperClassifier",
    "GraperError",
    "GraperRegressor",
    "GroundTruth",
    "GroupPartition",
    "HyperPriors",
    "InputError",
    "MultivariateState",
    "NumericalError",
    "PreprocessTransform",
    "SimulationConfig",
    "VariationalState",
    "benchmark_runtime",
    "cross_validate",
    "digamma",
    "evaluate",
    "expected_values",
    "fit_linear",
    "fit_linear_multivariate",
    "fit_logistic",
    "groups_from_covariate",
    "posterior_beta",
    "predict_linear",
    "predict_logistic",
    "run_grid",
    "sigmoid_lower_bound",
    "simulate_dataset",
    "standardize",
    "__version__",
]
