"""Structural equation modeling with Vuong-style model comparison.

The package fits multivariate-normal SEMs by maximum likelihood and
provides the comparison machinery built on casewise likelihood ratios:
a distinguishability test, a non-nested likelihood ratio test, nested
variants, and confidence intervals for information-criterion
differences, together with a bootstrap benchmark and a simulation lab.
"""

from semvuong.dsl import ModelError, ModelSpec, param_count, parse_model
from semvuong.sem import (
    DataError,
    Dataset,
    FitError,
    FittedModel,
    ImpliedMoments,
    casewise_loglik,
    casewise_scores,
    fit_ml,
    implied_moments,
    information_criteria,
    unit_information,
)
from semvuong.vuong import (
    ComparisonResult,
    DegenerateComparisonError,
    distinguishability_test,
    ic_difference_ci,
    nested_tests,
    nonnested_lrt,
    omega_hat_squared,
    sequential_compare,
    w_matrix,
)
from semvuong.wchisq import WeightedChiSq
from semvuong.resampling import SimConfig, bootstrap_ic_ci, simulate_data

__version__ = "0.1.0"

__all__ = [
    "ModelError",
    "ModelSpec",
    "param_count",
    "parse_model",
    "DataError",
    "Dataset",
    "FitError",
    "FittedModel",
    "ImpliedMoments",
    "casewise_loglik",
    "casewise_scores",
    "fit_ml",
    "implied_moments",
    "information_criteria",
    "unit_information",
    "ComparisonResult",
    "DegenerateComparisonError",
    "distinguishability_test",
    "ic_difference_ci",
    "nested_tests",
    "nonnested_lrt",
    "omega_hat_squared",
    "sequential_compare",
    "w_matrix",
    "WeightedChiSq",
    "SimConfig",
    "bootstrap_ic_ci",
    "simulate_data",
    "__version__",
]
