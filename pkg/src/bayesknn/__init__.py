"""Bayesian k-nearest neighbours: a posterior over the neighbour count."""

__version__ = "0.1.0"

from .engine import ConstantHazard, CustomHazard, ImpossibleDataError, KPosterior, run, step
from .estimator import BayesianKNN, QueryResult, class_prior, tune
from .model import ConfigurationError, Family, ModelParams, beta_bernoulli, dirichlet, normal_known_variance
from .neighbors import OrderedNeighbors, order_by_distance, truncation_index
from .predictor import Prediction, outlier_score, predict

__all__ = [
    "BayesianKNN", "ConfigurationError", "ConstantHazard", "CustomHazard", "Family",
    "ImpossibleDataError", "KPosterior", "ModelParams", "OrderedNeighbors", "Prediction",
    "QueryResult", "beta_bernoulli", "class_prior", "dirichlet", "normal_known_variance",
    "order_by_distance", "outlier_score", "predict", "run", "step", "truncation_index", "tune",
]
