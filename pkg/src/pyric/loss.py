"""Extremal Dependency Index: hard verification score and soft training loss."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import Var, lane_sum, log, maximum, minimum, sigmoid, value_of

DEFAULT_EPSILON = 1e-6
DEFAULT_BETA = 10.0


class UndefinedScoreError(ValueError):
    """EDI needs at least one observed fire and one no-fire sample."""


@dataclass
class ConfusionCounts:
    hits: object
    misses: object
    false_alarms: object
    correct_negatives: object
    soft: bool = False

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.hits + other.hits, self.misses + other.misses,
                               self.false_alarms + other.false_alarms,
                               self.correct_negatives + other.correct_negatives,
                               self.soft or other.soft)

    def scaled(self, k: float) -> "ConfusionCounts":
        return ConfusionCounts(self.hits * k, self.misses * k, self.false_alarms * k,
                               self.correct_negatives * k, True)

    def numeric(self) -> "ConfusionCounts":
        return ConfusionCounts(float(value_of(self.hits)), float(value_of(self.misses)),
                               float(value_of(self.false_alarms)), float(value_of(self.correct_negatives)),
                               self.soft)


@dataclass(frozen=True)
class EdiScore:
    value: float
    h: float
    f: float
    degenerate: bool  # rates were floored or capped before the logs


def _check_series(index_values, observations):
    idx = np.asarray(value_of(index_values), dtype=np.float64)
    obs = np.asarray(observations)
    if idx.size == 0:
        raise ValueError("empty series")
    if idx.shape != obs.shape:
        raise ValueError(f"series not aligned: {idx.shape} vs {obs.shape}")
    if not np.all((obs == 0) | (obs == 1)):
        raise ValueError("observations must be binary")
    return idx, obs.astype(bool)


def hard_counts(index_values, observations, threshold: float) -> ConfusionCounts:
    """2x2 contingency of ``index > threshold`` against observed fire."""
    idx, obs = _check_series(index_values, observations)
    pred = idx > threshold
    return ConfusionCounts(
        int(np.count_nonzero(pred & obs)),
        int(np.count_nonzero(~pred & obs)),
        int(np.count_nonzero(pred & ~obs)),
        int(np.count_nonzero(~pred & ~obs)),
    )


def soft_counts(index_values, observations, threshold: float, beta: float = DEFAULT_BETA) -> ConfusionCounts:
    """Sigmoid-weighted contingency counts, differentiable in the index.

    ``index_values`` is an array, a lane node, or a sequence of scalar nodes.
    Each sample contributes p = sigmoid(beta * (index - threshold)) to the
    forecast-yes column.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    if isinstance(index_values, (list, tuple)) and index_values and isinstance(index_values[0], Var):
        obs = np.asarray(observations).astype(bool)
        if len(obs) != len(index_values):
            raise ValueError("series not aligned")
        hits = fa = 0.0
        for v, o in zip(index_values, obs):
            p = sigmoid((v - threshold) * beta)
            if o:
                hits = hits + p
            else:
                fa = fa + p
        n_fire = float(np.count_nonzero(obs))
        return ConfusionCounts(hits, n_fire - hits, fa, float(len(obs)) - n_fire - fa, True)

    _, obs = _check_series(index_values, observations)
    fire = obs.astype(np.float64)
    p = sigmoid((index_values - threshold) * beta)
    hits = lane_sum(p * fire)
    fa = lane_sum(p * (1.0 - fire))
    n_fire = float(fire.sum())
    n_none = float(fire.size) - n_fire
    return ConfusionCounts(hits, n_fire - hits, fa, n_none - fa, True)


def _rates(counts: ConfusionCounts):
    n_fire = counts.hits + counts.misses
    n_none = counts.false_alarms + counts.correct_negatives
    if float(value_of(n_fire)) <= 0:
        raise UndefinedScoreError("no observed fires: EDI is undefined")
    if float(value_of(n_none)) <= 0:
        raise UndefinedScoreError("no fire-free samples: EDI is undefined")
    return counts.hits / n_fire, counts.false_alarms / n_none


def edi(counts: ConfusionCounts, epsilon: float = DEFAULT_EPSILON) -> EdiScore:
    """(log F - log H) / (log F + log H) with rates kept inside [eps, 1 - eps]."""
    h, f = _rates(counts.numeric())
    hc = min(max(h, epsilon), 1.0 - epsilon)
    fc = min(max(f, epsilon), 1.0 - epsilon)
    lf, lh = math.log(fc), math.log(hc)
    return EdiScore((lf - lh) / (lf + lh), h, f, degenerate=(hc != h or fc != f))


def edi_value(counts: ConfusionCounts, epsilon: float = DEFAULT_EPSILON):
    """EDI as a tape expression when the counts are tape nodes."""
    h, f = _rates(counts)
    h = minimum(maximum(h, epsilon), 1.0 - epsilon)
    f = minimum(maximum(f, epsilon), 1.0 - epsilon)
    lf, lh = log(f), log(h)
    return (lf - lh) / (lf + lh)


def edi_loss(index_values, observations, threshold: float, beta: float = DEFAULT_BETA,
             epsilon: float = DEFAULT_EPSILON):
    """1 - EDI of the soft counts; minimizing it maximizes EDI."""
    return 1.0 - edi_value(soft_counts(index_values, observations, threshold, beta), epsilon)
