"""Reference computations used to check the engine and the benchmarks.

``exact_k_posterior`` enumerates every way of cutting the ordered sequence
into segments and never touches the recursion in :mod:`bayesknn.engine`.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .data import Dataset
from .engine import KPosterior
from .model import ModelParams, log_evidence
from .neighbors import order_by_distance

MAX_EXACT_N = 20


def exact_k_posterior(xs: Sequence, prior: ModelParams, p_gamma: float) -> KPosterior:
    """Posterior over the length of the segment touching the target.

    ``xs`` is ordered farthest first. A cut may follow each item, the last
    slot being the gap between the nearest item and the target, so there are
    ``2 ** n`` configurations. Each one is weighted by the product of segment
    evidences times ``p_gamma`` per cut and ``1 - p_gamma`` per slot without
    one. ``k`` is the number of items after the last cut.
    """
    n = len(xs)
    if n > MAX_EXACT_N:
        raise ValueError(f"enumeration over 2**{n} partitions refused (max n={MAX_EXACT_N})")
    if not 0 < p_gamma < 1:
        raise ValueError("p_gamma must lie in (0, 1)")
    xs = list(xs)
    seg = {
        (i, j): log_evidence(prior, xs[i:j]) for i in range(n + 1) for j in range(i, n + 1)
    }
    log_p, log_q = math.log(p_gamma), math.log1p(-p_gamma)
    by_k: list[list[float]] = [[] for _ in range(n + 1)]
    for cuts in itertools.product((False, True), repeat=n):
        weight = 0.0
        start = 0
        for t, cut in enumerate(cuts):
            if cut:
                weight += seg[start, t + 1] + log_p
                start = t + 1
            else:
                weight += log_q
        weight += seg[start, n]
        by_k[n - start].append(weight)
    log_k = np.array([logsumexp(w) if w else -np.inf for w in by_k])
    total = logsumexp(log_k)
    return KPosterior(np.exp(log_k - total), float(total))


# -- fixed-k baseline ---------------------------------------------------------


@dataclass(frozen=True)
class BaselineResult:
    table: list[tuple[int, float]]
    best_k: int
    best_metric: float


def _fixed_k_predictions(train: Dataset, queries: np.ndarray, ks: Sequence[int], metric="euclidean",
                         exclude_self: bool = False) -> dict[int, np.ndarray]:
    ks_arr = np.asarray(ks)
    table = np.empty((len(ks), len(queries)), dtype=train.y.dtype)
    n_classes = max(train.n_classes, 1)
    for q, point in enumerate(queries):
        X, y = train.X, train.y
        if exclude_self:
            keep = np.arange(len(train)) != q
            X, y = X[keep], y[keep]
        near = order_by_distance(point, X, y, metric).nearest_first()
        if train.kind == "class":
            counts = np.cumsum(np.eye(n_classes)[near.astype(int)], axis=0)
            # argmax picks the lower class on a tied vote
            table[:, q] = np.argmax(counts[ks_arr - 1], axis=1)
        else:
            table[:, q] = np.cumsum(near)[ks_arr - 1] / ks_arr
    return {k: table[i] for i, k in enumerate(ks)}


def _score(kind: str, predictions, truths) -> float:
    if kind == "class":
        return misclassification_rate(predictions, truths)
    return mean_absolute_error(predictions, truths)


def knn_baseline(train: Dataset, test: Dataset, k_range: Sequence[int], metric="euclidean") -> BaselineResult:
    """Fixed-k majority vote (or mean) for every k, scored on ``test``.

    The best k is picked on the test metric; ties go to the smaller k.
    """
    ks = sorted(set(int(k) for k in k_range))
    if not ks or ks[0] < 1 or ks[-1] > len(train):
        raise ValueError(f"k_range must lie within [1, {len(train)}]")
    preds = _fixed_k_predictions(train, test.X, ks, metric)
    table = [(k, _score(train.kind, preds[k], test.y)) for k in ks]
    best_k, best = min(table, key=lambda kv: (kv[1], kv[0]))
    return BaselineResult(table, best_k, best)


def knn_loo_select(train: Dataset, k_range: Sequence[int], metric="euclidean") -> BaselineResult:
    """Leave-one-out selection of a global k on the training set alone."""
    ks = sorted(set(int(k) for k in k_range))
    if not ks or ks[0] < 1 or ks[-1] > len(train) - 1:
        raise ValueError(f"k_range must lie within [1, {len(train) - 1}]")
    preds = _fixed_k_predictions(train, train.X, ks, metric, exclude_self=True)
    table = [(k, _score(train.kind, preds[k], train.y)) for k in ks]
    best_k, best = min(table, key=lambda kv: (kv[1], kv[0]))
    return BaselineResult(table, best_k, best)


def knn_predict(train: Dataset, queries: np.ndarray, k: int, metric="euclidean") -> np.ndarray:
    return _fixed_k_predictions(train, np.atleast_2d(queries), [k], metric)[k]


# -- metrics --------------------------------------------------------------------


def misclassification_rate(predictions, truths) -> float:
    p, t = np.asarray(predictions), np.asarray(truths)
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {t.shape}")
    return float(np.mean(p != t))


def mean_absolute_error(predictions, truths) -> float:
    p, t = np.asarray(predictions, dtype=float), np.asarray(truths, dtype=float)
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {t.shape}")
    return float(np.mean(np.abs(p - t)))


def metrics(predictions, truths, kind: str) -> dict[str, float]:
    if kind == "class":
        return {"misclassification": misclassification_rate(predictions, truths)}
    return {"mean_absolute_error": mean_absolute_error(predictions, truths)}
