"""Distance ordering of a training set around a query point."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

Metric = Callable[[np.ndarray, np.ndarray], np.ndarray]


def euclidean(points: np.ndarray, target: np.ndarray) -> np.ndarray:
    return np.sqrt(((points - target) ** 2).sum(axis=1))


def manhattan(points: np.ndarray, target: np.ndarray) -> np.ndarray:
    return np.abs(points - target).sum(axis=1)


METRICS: dict[str, Metric] = {"euclidean": euclidean, "manhattan": manhattan}


def get_metric(metric: Union[str, Metric]) -> Metric:
    if callable(metric):
        return metric
    try:
        return METRICS[metric]
    except KeyError:
        raise ValueError(f"unknown metric {metric!r}; choose from {sorted(METRICS)}") from None


@dataclass(frozen=True)
class OrderedNeighbors:
    """Training responses sorted farthest first.

    ``responses[-1]`` is the nearest neighbour. ``index`` holds the original
    row numbers in the same order.
    """

    target: np.ndarray
    distances: np.ndarray
    responses: np.ndarray
    index: np.ndarray

    @property
    def n(self) -> int:
        return len(self.responses)

    def nearest(self, m: int) -> "OrderedNeighbors":
        """Keep only the ``m`` nearest items (still farthest first)."""
        m = min(max(int(m), 0), self.n)
        start = self.n - m
        return OrderedNeighbors(
            self.target, self.distances[start:], self.responses[start:], self.index[start:]
        )

    def nearest_first(self) -> np.ndarray:
        return self.responses[::-1]

    def gaps(self) -> np.ndarray:
        """Radial gap after each item: distance to the next-nearer item,
        and to the target for the nearest one."""
        d = self.distances
        return d - np.append(d[1:], 0.0)


def order_by_distance(target, X, y, metric: Union[str, Metric] = "euclidean") -> OrderedNeighbors:
    """Sort ``(X, y)`` by distance to ``target``, farthest first.

    Ties keep the lower row index on the far side.
    """
    X = np.asarray(X, dtype=float)
    target = np.asarray(target, dtype=float)
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("training set is empty")
    if target.shape != (X.shape[1],):
        raise ValueError(f"target has shape {target.shape}, data has {X.shape[1]} features")
    d = np.asarray(get_metric(metric)(X, target), dtype=float)
    # stable ascending sort on (-d, index): farthest first, lower index first on ties
    order = np.lexsort((np.arange(len(d)), -d))
    return OrderedNeighbors(target, d[order], np.asarray(y)[order], order)


def truncation_index(p_gamma: float, epsilon: float, n: int) -> int:
    """Smallest ``m`` with ``(1 - p_gamma) ** m < epsilon``, capped at ``n``."""
    if not 0 < p_gamma < 1:
        raise ValueError("p_gamma must lie in (0, 1)")
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    m = max(math.ceil(math.log(epsilon) / math.log1p(-p_gamma)), 0)
    while (1 - p_gamma) ** m >= epsilon:
        m += 1
    while m > 0 and (1 - p_gamma) ** (m - 1) < epsilon:
        m -= 1
    return min(m, n)
