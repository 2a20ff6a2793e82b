"""Run-length recursion over distance-ordered neighbours.

The ordered responses are consumed farthest first. After the nearest one has
been seen, the run length is the number of nearest neighbours that share the
target's data-generating process, i.e. the posterior over ``k``.

Entry ``i`` of the state holds ``log p(k_t = i, x_0:t)`` together with the
model parameters conditioned on the ``i`` most recent observations. A hazard
value ``h`` is the probability of a boundary right after the current
observation, so a run either grows with ``1 - h`` or resets to zero with
``h``.

Two change-point conventions are offered:

``"run"`` (default)
    the reset mass carries each run's own predictive of the observation. With
    a boundary allowed between every pair of consecutive items, and between
    the nearest item and the target, this makes the recursion an exact
    marginalisation over all partitions.
``"prior"``
    the reset mass uses the predictive under the untouched prior for every
    run. Cheaper to reason about, but only approximate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .model import ModelParams, log_predictive_batch, update_batch
from .neighbors import OrderedNeighbors

CHANGEPOINT_CONVENTIONS = ("run", "prior")


class ImpossibleDataError(ArithmeticError):
    """Every run hypothesis assigns zero probability to the data."""


def _logsumexp(v: np.ndarray) -> float:
    m = v.max()
    if m == -np.inf:
        return -math.inf
    return float(m + math.log(np.exp(v - m).sum()))


# -- hazards ------------------------------------------------------------------


@dataclass(frozen=True)
class ConstantHazard:
    p_gamma: float

    def __post_init__(self):
        if not 0 < self.p_gamma < 1:
            raise ValueError(f"p_gamma must lie in (0, 1), got {self.p_gamma}")

    def __call__(self, run_lengths: np.ndarray, gap: float) -> np.ndarray:
        return np.full(len(run_lengths), self.p_gamma)


@dataclass(frozen=True)
class CustomHazard:
    """Hazard from ``fn(run_lengths, gap) -> probabilities``.

    ``gap`` is the radial distance between the current item and the next
    nearer one (or the target, for the nearest item).
    """

    fn: Callable[[np.ndarray, float], np.ndarray]

    def __call__(self, run_lengths: np.ndarray, gap: float) -> np.ndarray:
        h = np.broadcast_to(np.asarray(self.fn(run_lengths, gap), dtype=float), run_lengths.shape)
        if np.any(h <= 0) or np.any(h >= 1):
            raise ValueError("hazard values must lie strictly inside (0, 1)")
        return h


Hazard = Callable[[np.ndarray, float], np.ndarray]


# -- state --------------------------------------------------------------------


@dataclass(frozen=True)
class RunLengthState:
    prior: ModelParams
    log_joint: np.ndarray
    run_params: np.ndarray
    t: int = 0

    def __post_init__(self):
        if len(self.log_joint) != len(self.run_params):
            raise ValueError("log_joint and run_params must have equal length")


@dataclass(frozen=True)
class KPosterior:
    """Posterior over the neighbour count, ``probs[i] = p(k = i | data)``."""

    probs: np.ndarray
    log_evidence: float = field(default=math.nan, compare=False)

    @property
    def n(self) -> int:
        return len(self.probs) - 1

    @property
    def map_k(self) -> int:
        return int(np.argmax(self.probs))

    @property
    def mean_k(self) -> float:
        return float(self.probs @ np.arange(len(self.probs)))

    @property
    def entropy(self) -> float:
        p = self.probs[self.probs > 0]
        return float(-(p * np.log(p)).sum())

    def point_mass(self, k: int) -> "KPosterior":
        probs = np.zeros_like(self.probs)
        probs[k] = 1.0
        return KPosterior(probs, self.log_evidence)


def init(prior: ModelParams) -> RunLengthState:
    return RunLengthState(prior, np.zeros(1), prior.array[None, :], 0)


def step(
    state: RunLengthState,
    x,
    hazard: Hazard,
    gap: float = 0.0,
    changepoint: str = "run",
) -> RunLengthState:
    """Absorb one observation; returns a new, one-longer state."""
    if changepoint not in CHANGEPOINT_CONVENTIONS:
        raise ValueError(f"changepoint must be one of {CHANGEPOINT_CONVENTIONS}")
    family = state.prior.family
    lj = state.log_joint
    with np.errstate(divide="ignore"):
        lp = log_predictive_batch(family, state.run_params, x)
    h = np.asarray(hazard(np.arange(len(lj)), gap), dtype=float)
    growth = lj + lp + np.log1p(-h)
    if changepoint == "run":
        reset = _logsumexp(lj + lp + np.log(h))
    else:
        lp0 = log_predictive_batch(family, state.prior.array[None, :], x)[0]
        reset = _logsumexp(lj + np.log(h)) + lp0
    log_joint = np.concatenate(([reset], growth))
    if _logsumexp(log_joint) == -math.inf:
        raise ImpossibleDataError(f"observation {x!r} has zero probability under every run")
    run_params = np.concatenate((state.prior.array[None, :], update_batch(family, state.run_params, x)))
    return RunLengthState(state.prior, log_joint, run_params, state.t + 1)


def posterior(state: RunLengthState) -> KPosterior:
    lj = state.log_joint
    total = _logsumexp(lj)
    if total == -math.inf:
        raise ImpossibleDataError("all run hypotheses have zero probability")
    return KPosterior(np.exp(lj - total), total)


def run(
    neighbors: OrderedNeighbors,
    prior: ModelParams,
    hazard: Hazard,
    m: Optional[int] = None,
    changepoint: str = "run",
) -> KPosterior:
    """Posterior over ``k`` for one query.

    With ``m`` set, only the ``m`` nearest items are consumed and the top
    entry ``k = m`` absorbs every longer run.

    This is the same recursion as repeated :func:`step` calls, written over
    preallocated buffers.
    """
    if changepoint not in CHANGEPOINT_CONVENTIONS:
        raise ValueError(f"changepoint must be one of {CHANGEPOINT_CONVENTIONS}")
    if m is not None:
        neighbors = neighbors.nearest(m)
    n = neighbors.n
    if n < 1:
        raise ValueError("need at least one neighbour")
    family = prior.family
    p0 = prior.array
    xs = neighbors.responses
    constant = isinstance(hazard, ConstantHazard)
    gaps = None if constant else neighbors.gaps()
    if constant:
        log_h, log_1mh = math.log(hazard.p_gamma), math.log1p(-hazard.p_gamma)
    if family.discrete:
        xs = xs.astype(int)
        log_prior_pred = np.log(p0) - math.log(p0.sum())

    lj = np.full(n + 1, -np.inf)
    lj[0] = 0.0
    params = np.empty((n + 1, len(p0)))
    params[0] = p0
    buf = np.empty(n + 1)
    with np.errstate(divide="ignore"):
        for t in range(n):
            r = t + 1
            x = xs[t]
            cur = lj[:r]
            if family.discrete:
                lp = np.log(params[:r, x], out=buf[:r])
                lp -= np.log(params[:r].sum(axis=1))
            else:
                lp = log_predictive_batch(family, params[:r], x)
            if constant:
                if changepoint == "run":
                    reset = _logsumexp(cur + lp) + log_h
                else:
                    reset = _logsumexp(cur) + log_h + (
                        log_prior_pred[x] if family.discrete
                        else log_predictive_batch(family, p0[None, :], x)[0]
                    )
                growth = cur + lp + log_1mh
            else:
                h = hazard(np.arange(r), float(gaps[t]))
                if changepoint == "run":
                    reset = _logsumexp(cur + lp + np.log(h))
                else:
                    lp0 = log_predictive_batch(family, p0[None, :], x)[0]
                    reset = _logsumexp(cur + np.log(h)) + lp0
                growth = cur + lp + np.log1p(-h)
            lj[1 : r + 1] = growth
            lj[0] = reset
            if family.discrete:
                params[1 : r + 1] = params[:r]
                params[1 : r + 1, x] += 1.0
            else:
                params[1 : r + 1] = update_batch(family, params[:r], x)
            params[0] = p0
            if lj[: r + 1].max() == -np.inf:
                raise ImpossibleDataError(f"observation {x!r} has zero probability under every run")
    total = _logsumexp(lj)
    return KPosterior(np.exp(lj - total), total)
