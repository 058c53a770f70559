"""Generalized linear models with one interval-censored covariate.

The covariate's distribution is estimated nonparametrically on the
augmented Turnbull partition jointly with the regression coefficients.
"""
from .data import Dataset, read_data
from .estimator import FitConfig, FitResult, fit, loglikelihood, maximize_theta, observed_information
from .families import (
    BERNOULLI,
    GAMMA,
    GAUSSIAN,
    Family,
    ObservedInterval,
    Observation,
    ParameterVector,
    get_family,
    linear_predictor,
    log_density,
    score_point,
)
from .npmle import gelc_weight_update, solve_weights, turnbull_update
from .partition import Partition, build_partition, classic_turnbull_intervals
from .quadrature import cell_density_matrix, integrate_density, integrate_score_weighted
from .simulation import Scenario, compute_metrics, run_study

__version__ = "0.1.0"
