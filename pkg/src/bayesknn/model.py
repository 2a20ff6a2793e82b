"""Conjugate observation models.

Each family stores its hyperparameters as a short float vector. The module
level functions (`prior`, `update`, `log_predictive`, `log_evidence`) act on
single :class:`ModelParams` values; the ``*_batch`` kernels act on stacked
``(R, d)`` arrays so the engine can evaluate every run hypothesis at once.

Families
--------
BETA_BERNOULLI
    ``[alpha, beta]``. Label 0 counts towards ``alpha``, label 1 towards
    ``beta``.
DIRICHLET_CATEGORICAL
    ``[alpha_0, ..., alpha_{C-1}]``.
NORMAL_KNOWN_VARIANCE
    ``[mean, mean_variance, noise_variance]``: a Normal prior on the unknown
    mean, with a fixed observation variance.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln

LOG_2PI = math.log(2.0 * math.pi)


class ConfigurationError(ValueError):
    """Invalid hyperparameters or run configuration."""


class Family(str, enum.Enum):
    BETA_BERNOULLI = "beta-bernoulli"
    DIRICHLET_CATEGORICAL = "dirichlet-categorical"
    NORMAL_KNOWN_VARIANCE = "normal"

    @property
    def discrete(self) -> bool:
        return self is not Family.NORMAL_KNOWN_VARIANCE


@dataclass(frozen=True)
class ModelParams:
    family: Family
    values: tuple[float, ...]

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    @property
    def n_classes(self) -> int:
        if not self.family.discrete:
            raise TypeError("a continuous model has no class alphabet")
        return len(self.values)

    # convenience accessors used by reports and tests
    @property
    def alpha(self) -> float:
        return self.values[0]

    @property
    def beta(self) -> float:
        return self.values[1]

    @property
    def mean(self) -> float:
        return self.values[0]

    @property
    def mean_variance(self) -> float:
        return self.values[1]

    @property
    def noise_variance(self) -> float:
        return self.values[2]


def prior(family: Family | str, hyperparameters: Sequence[float]) -> ModelParams:
    """Validate hyperparameters and wrap them as the untouched prior."""
    family = Family(family)
    values = tuple(float(v) for v in hyperparameters)
    if not all(math.isfinite(v) for v in values):
        raise ConfigurationError(f"non-finite hyperparameter in {values}")
    if family is Family.BETA_BERNOULLI:
        if len(values) != 2:
            raise ConfigurationError("beta-bernoulli takes (alpha, beta)")
        if min(values) <= 0:
            raise ConfigurationError(f"pseudo-counts must be positive, got {values}")
    elif family is Family.DIRICHLET_CATEGORICAL:
        if len(values) < 2:
            raise ConfigurationError("dirichlet needs at least two classes")
        if min(values) <= 0:
            raise ConfigurationError(f"pseudo-counts must be positive, got {values}")
    else:
        if len(values) != 3:
            raise ConfigurationError("normal takes (mean, mean_variance, noise_variance)")
        if values[1] <= 0 or values[2] <= 0:
            raise ConfigurationError(f"variances must be positive, got {values[1:]}")
    return ModelParams(family, values)


def beta_bernoulli(alpha: float, beta: float) -> ModelParams:
    return prior(Family.BETA_BERNOULLI, (alpha, beta))


def dirichlet(alphas: Sequence[float]) -> ModelParams:
    return prior(Family.DIRICHLET_CATEGORICAL, alphas)


def normal_known_variance(mean: float, mean_variance: float, noise_variance: float) -> ModelParams:
    return prior(Family.NORMAL_KNOWN_VARIANCE, (mean, mean_variance, noise_variance))


def _check_observation(family: Family, n_values: int, x) -> None:
    if family.discrete:
        if isinstance(x, (bool, np.bool_)) or int(x) != x:
            raise TypeError(f"class label expected, got {x!r}")
        if not 0 <= int(x) < n_values:
            raise ValueError(f"class label {x} outside alphabet of size {n_values}")
    elif not isinstance(x, (int, float, np.integer, np.floating)):
        raise TypeError(f"real observation expected, got {x!r}")


# -- batch kernels ------------------------------------------------------------
# ``params`` has shape (R, d); results have leading shape (R,).


def update_batch(family: Family, params: np.ndarray, x) -> np.ndarray:
    out = params.copy()
    if family.discrete:
        out[:, int(x)] += 1.0
        return out
    mean, mvar, nvar = params[:, 0], params[:, 1], params[:, 2]
    precision = 1.0 / mvar + 1.0 / nvar
    out[:, 0] = (mean / mvar + x / nvar) / precision
    out[:, 1] = 1.0 / precision
    return out


def log_predictive_batch(family: Family, params: np.ndarray, x) -> np.ndarray:
    if family.discrete:
        return np.log(params[:, int(x)]) - np.log(params.sum(axis=1))
    var = params[:, 1] + params[:, 2]
    return -0.5 * (LOG_2PI + np.log(var) + (x - params[:, 0]) ** 2 / var)


# -- single-value API ---------------------------------------------------------


def update(params: ModelParams, x) -> ModelParams:
    """Condition ``params`` on one observation; the input is left untouched."""
    _check_observation(params.family, len(params.values), x)
    new = update_batch(params.family, params.array[None, :], x)[0]
    return ModelParams(params.family, tuple(float(v) for v in new))


def log_predictive(params: ModelParams, x) -> float:
    _check_observation(params.family, len(params.values), x)
    return float(log_predictive_batch(params.family, params.array[None, :], x)[0])


def predictive_probs(params: ModelParams) -> np.ndarray:
    """Posterior-predictive class probabilities of a discrete model."""
    a = params.array
    return a / a.sum()


def predictive_mean_var(params: ModelParams) -> tuple[float, float]:
    """Mean and variance of the Normal posterior predictive."""
    m, mvar, nvar = params.values
    return m, mvar + nvar


def log_evidence(prior_params: ModelParams, xs: Sequence) -> float:
    """Log marginal likelihood of ``xs`` under ``prior_params``.

    Computed in closed form (Dirichlet-multinomial, or the multivariate Normal
    marginal with covariance ``noise * I + mean_var * 11^T``) rather than by
    chaining predictives, so it can serve as an independent check on them.
    """
    family = prior_params.family
    n = len(xs)
    if n == 0:
        return 0.0
    for x in xs:
        _check_observation(family, len(prior_params.values), x)
    if family.discrete:
        alpha = prior_params.array
        counts = np.bincount(np.asarray(xs, dtype=int), minlength=len(alpha))
        return float(
            gammaln(alpha.sum())
            - gammaln(alpha.sum() + n)
            + np.sum(gammaln(alpha + counts) - gammaln(alpha))
        )
    m, s0, s = prior_params.values
    r = np.asarray(xs, dtype=float) - m
    # Sherman-Morrison on s*I + s0*11^T
    logdet = (n - 1) * math.log(s) + math.log(s + n * s0)
    quad = (r @ r) / s - s0 * r.sum() ** 2 / (s * (s + n * s0))
    return float(-0.5 * (n * LOG_2PI + logdet + quad))
