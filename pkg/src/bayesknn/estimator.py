"""Query-level entry point tying ordering, recursion and prediction together."""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from . import engine, predictor
from .data import Dataset
from .model import Family, ModelParams, beta_bernoulli, dirichlet, normal_known_variance
from .neighbors import Metric, OrderedNeighbors, order_by_distance, truncation_index


@dataclass(frozen=True)
class QueryResult:
    prediction: predictor.Prediction
    map_prediction: predictor.Prediction
    neighbors: OrderedNeighbors
    seconds: float

    @property
    def k_posterior(self) -> engine.KPosterior:
        return self.prediction.k_posterior


@dataclass(frozen=True)
class BayesianKNN:
    """Bayesian k-NN over a fixed training set.

    ``epsilon`` turns on truncation: only the ``m`` nearest points are used,
    with ``m`` the smallest count whose geometric tail mass falls below it.
    Only meaningful for a constant hazard.
    """

    X: np.ndarray
    y: np.ndarray
    prior: ModelParams
    hazard: engine.Hazard
    metric: Union[str, Metric] = "euclidean"
    epsilon: Optional[float] = None
    changepoint: str = "run"
    m: Optional[int] = field(default=None, init=False)

    def __post_init__(self):
        if self.epsilon is not None:
            if not isinstance(self.hazard, engine.ConstantHazard):
                raise ValueError("truncation needs a constant hazard")
            object.__setattr__(
                self, "m", truncation_index(self.hazard.p_gamma, self.epsilon, len(self.y))
            )

    @classmethod
    def from_dataset(cls, train: Dataset, prior: ModelParams, hazard, **kw) -> "BayesianKNN":
        return cls(train.X, train.y, prior, hazard, **kw)

    def order(self, query, exclude: Optional[int] = None) -> OrderedNeighbors:
        if exclude is None:
            return order_by_distance(query, self.X, self.y, self.metric)
        keep = np.arange(len(self.y)) != exclude
        nb = order_by_distance(query, self.X[keep], self.y[keep], self.metric)
        # report original row numbers
        return replace(nb, index=np.flatnonzero(keep)[nb.index])

    def posterior(self, query, exclude: Optional[int] = None) -> engine.KPosterior:
        return engine.run(self.order(query, exclude), self.prior, self.hazard, self.m, self.changepoint)

    def query(self, query, truth=None, exclude: Optional[int] = None) -> QueryResult:
        start = time.perf_counter()
        nb = self.order(query, exclude)
        if self.m is not None:
            nb = nb.nearest(self.m)
        kpost = engine.run(nb, self.prior, self.hazard, None, self.changepoint)
        elapsed = time.perf_counter() - start
        full = predictor.predict(nb, kpost, self.prior, truth)
        mapped = predictor.predict(nb, kpost.point_mass(kpost.map_k), self.prior, truth)
        return QueryResult(full, mapped, nb, elapsed)


def class_prior(n_classes: int, alpha: float = 1.0, beta: Optional[float] = None,
                alphas: Optional[Sequence[float]] = None) -> ModelParams:
    """Beta prior for two classes, symmetric (or explicit) Dirichlet otherwise."""
    if alphas is not None:
        if len(alphas) != n_classes:
            raise ValueError(f"need {n_classes} Dirichlet pseudo-counts, got {len(alphas)}")
        return dirichlet(alphas) if n_classes > 2 else beta_bernoulli(*alphas)
    if n_classes == 2:
        return beta_bernoulli(alpha, alpha if beta is None else beta)
    return dirichlet([alpha] * n_classes)


def loo_log_loss(train: Dataset, prior: ModelParams, hazard, rows: Optional[Sequence[int]] = None,
                 **kw) -> float:
    """Mean leave-one-out negative log predictive of the training responses."""
    model = BayesianKNN.from_dataset(train, prior, hazard, **kw)
    rows = range(len(train)) if rows is None else rows
    total = 0.0
    for i in rows:
        p = model.query(train.X[i], exclude=i).prediction
        if prior.family is Family.NORMAL_KNOWN_VARIANCE:
            total += 0.5 * (np.log(2 * np.pi * p.variance) + (train.y[i] - p.estimate) ** 2 / p.variance)
        else:
            total -= np.log(p.class_probs[int(train.y[i])])
    return total / len(rows)


@dataclass(frozen=True)
class TuneResult:
    prior_value: Optional[float]
    p_gamma: float
    score: float
    table: list[tuple[Optional[float], float, float]]


CLASS_ALPHA_GRID = (0.25, 0.5, 1.0, 2.0, 5.0, 10.0)
# multipliers on the data-driven noise variance
NOISE_SCALE_GRID = (1.0, 0.3, 0.1, 0.03, 0.01)
P_GAMMA_GRID = (0.005, 0.01, 0.02, 0.05, 0.1)


def tune(train: Dataset, make_prior, prior_grid: Sequence[Optional[float]] = (None,),
         p_gammas: Sequence[float] = P_GAMMA_GRID, rows=None, **kw) -> TuneResult:
    """Grid search by leave-one-out log loss on the training set only.

    ``make_prior(value)`` builds the prior for one grid value (a Beta
    pseudo-count, a noise-variance multiplier, ...); pass
    ``prior_grid=(None,)`` to tune the hazard alone. Ties go to the first
    grid entry.
    """
    table = []
    for v, p in itertools.product(prior_grid, p_gammas):
        score = loo_log_loss(train, make_prior(v), engine.ConstantHazard(p), rows, **kw)
        table.append((v, p, float(score)))
    v, p, s = min(table, key=lambda r: r[2])
    return TuneResult(v, p, s, table)


def scaled_noise(prior: ModelParams, scale: Optional[float]) -> ModelParams:
    if scale is None:
        return prior
    return normal_known_variance(prior.mean, prior.mean_variance, prior.noise_variance * scale)
