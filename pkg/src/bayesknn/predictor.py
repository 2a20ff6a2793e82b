"""Posterior-weighted predictions from a k-posterior.

For every candidate ``k`` the prior is conditioned on the ``k`` nearest
responses; predictions are the mixture of those per-k predictives under the
k-posterior. ``k = 0`` is the untouched prior.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .engine import KPosterior
from .model import Family, ModelParams
from .neighbors import OrderedNeighbors


@dataclass(frozen=True)
class Prediction:
    kind: str  # "class" or "regression"
    k_posterior: KPosterior
    class_probs: Optional[np.ndarray] = None
    estimate: Optional[float] = None
    variance: Optional[float] = None
    outlier_score: Optional[float] = None
    outlier_k: Optional[int] = None

    @property
    def label(self) -> int:
        # np.argmax returns the first maximum, i.e. ties go to the lower class
        return int(np.argmax(self.class_probs))

    @property
    def value(self):
        return self.label if self.kind == "class" else self.estimate


def per_k_class_probs(neighbors: OrderedNeighbors, prior: ModelParams) -> np.ndarray:
    """``(n + 1, C)`` predictive class probabilities after the k nearest."""
    alpha = prior.array
    near = neighbors.nearest_first().astype(int)
    onehot = np.zeros((len(near) + 1, len(alpha)))
    onehot[np.arange(1, len(near) + 1), near] = 1.0
    counts = np.cumsum(onehot, axis=0)
    k = np.arange(len(near) + 1)
    return (alpha + counts) / (alpha.sum() + k)[:, None]


def per_k_normal(neighbors: OrderedNeighbors, prior: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean of the unknown mean and predictive variance per ``k``."""
    mu0, s0, s = prior.values
    near = neighbors.nearest_first().astype(float)
    sums = np.concatenate(([0.0], np.cumsum(near)))
    k = np.arange(len(near) + 1)
    precision = 1.0 / s0 + k / s
    means = (mu0 / s0 + sums / s) / precision
    return means, 1.0 / precision + s


def _check_support(neighbors: OrderedNeighbors, kpost: KPosterior) -> None:
    if len(kpost.probs) != neighbors.n + 1:
        raise ValueError(
            f"k-posterior has support {len(kpost.probs)}, expected {neighbors.n + 1}"
        )


def predict_class(
    neighbors: OrderedNeighbors, kpost: KPosterior, prior: ModelParams, truth: Optional[int] = None
) -> Prediction:
    if not prior.family.discrete:
        raise TypeError("predict_class needs a discrete model")
    _check_support(neighbors, kpost)
    table = per_k_class_probs(neighbors, prior)
    probs = kpost.probs @ table
    probs = probs / probs.sum()
    score = k_best = None
    if truth is not None:
        column = table[:, int(truth)]
        k_best = int(np.argmax(column))
        score = float(column[k_best])
    return Prediction("class", kpost, class_probs=probs, outlier_score=score, outlier_k=k_best)


def predict_regression(
    neighbors: OrderedNeighbors, kpost: KPosterior, prior: ModelParams, truth: Optional[float] = None
) -> Prediction:
    if prior.family is not Family.NORMAL_KNOWN_VARIANCE:
        raise TypeError("predict_regression needs the normal model")
    _check_support(neighbors, kpost)
    means, variances = per_k_normal(neighbors, prior)
    w = kpost.probs
    estimate = float(w @ means)
    variance = float(w @ (means**2) - estimate**2 + w @ variances)
    score = k_best = None
    if truth is not None:
        score, k_best = outlier_score(neighbors, truth, prior, with_k=True)
    return Prediction(
        "regression", kpost, estimate=estimate, variance=max(variance, 0.0),
        outlier_score=score, outlier_k=k_best,
    )


def predict(neighbors, kpost, prior, truth=None) -> Prediction:
    if prior.family.discrete:
        return predict_class(neighbors, kpost, prior, truth)
    return predict_regression(neighbors, kpost, prior, truth)


def outlier_score(neighbors: OrderedNeighbors, true_response, prior: ModelParams, with_k: bool = False):
    """Largest predictive probability (or density) of ``true_response`` over
    every ``k``; ``with_k`` also returns the maximising ``k`` (lowest on ties)."""
    if prior.family.discrete:
        values = per_k_class_probs(neighbors, prior)[:, int(true_response)]
    else:
        means, variances = per_k_normal(neighbors, prior)
        values = np.exp(-0.5 * (true_response - means) ** 2 / variances) / np.sqrt(
            2 * np.pi * variances
        )
    k = int(np.argmax(values))
    return (float(values[k]), k) if with_k else float(values[k])
