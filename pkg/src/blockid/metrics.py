"""Goodness-of-fit metrics: NRMSE fit, max-scaled RMS error and aggregates."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import ShapeError, UndefinedFitError, UndefinedScaleError

__all__ = ["MetricResult", "Aggregate", "nrmse_fit", "scaled_rms", "evaluate_pair", "aggregate"]


@dataclass(frozen=True)
class MetricResult:
    nrmse_fit: float
    scaled_rms: float
    n_samples: int


@dataclass(frozen=True)
class Aggregate:
    mean_fit: float
    mean_rms: float
    se_fit: float
    se_rms: float
    count: int


def _pair(y, yhat, min_len):
    y = np.asarray(y, dtype=float).ravel()
    yhat = np.asarray(yhat, dtype=float).ravel()
    if y.shape != yhat.shape:
        raise ShapeError(f"measured and predicted lengths differ ({y.size} vs {yhat.size})")
    if y.size < min_len:
        raise ShapeError(f"need at least {min_len} samples, got {y.size}")
    return y, yhat


def nrmse_fit(y, yhat) -> float:
    """100 (1 - ||y - yhat|| / ||y - mean(y)||), in percent."""
    y, yhat = _pair(y, yhat, 2)
    den = np.linalg.norm(y - y.mean())
    if den == 0.0:
        raise UndefinedFitError("measured output is constant; NRMSE fit is undefined")
    return float(100.0 * (1.0 - np.linalg.norm(y - yhat) / den))


def scaled_rms(y, yhat) -> float:
    """RMS error as a percentage of max |y|."""
    y, yhat = _pair(y, yhat, 1)
    # max |y| so signed outputs (angles) scale sensibly
    peak = float(np.max(np.abs(y)))
    if not peak > 0:
        raise UndefinedScaleError("maximum output is zero; scaled RMS is undefined")
    return float(100.0 / peak * np.sqrt(np.mean((y - yhat) ** 2)))


def evaluate_pair(y, yhat) -> MetricResult:
    return MetricResult(nrmse_fit(y, yhat), scaled_rms(y, yhat), int(np.size(y)))


def _mean_se(values):
    v = np.asarray(values, dtype=float)
    if v.size == 1:
        return float(v[0]), 0.0
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.size))


def aggregate(results: Iterable) -> Aggregate:
    """Means and standard errors (sample SD / sqrt(k); 0 for a single result).

    Accepts :class:`MetricResult` objects or bare fit values.
    """
    results = list(results)
    if not results:
        raise ShapeError("aggregate needs at least one result")
    if isinstance(results[0], MetricResult):
        fits = [r.nrmse_fit for r in results]
        rms = [r.scaled_rms for r in results]
    else:
        fits = [float(r) for r in results]
        rms = [np.nan] * len(fits)
    mf, sf = _mean_se(fits)
    mr, sr = _mean_se(rms)
    return Aggregate(mf, mr, sf, sr, len(fits))
