"""Scalar fits for design-space analysis: power laws, exponentials and R^2."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InsufficientDataError, ShapeError, UndefinedFitError

__all__ = ["PowerLawFit", "ExponentialFit", "fit_power_law", "fit_exponential", "r_squared"]


def r_squared(y, yhat) -> float:
    """Coefficient of determination ``1 - SS_res / SS_tot``."""
    y = np.asarray(y, dtype=float).ravel()
    yhat = np.asarray(yhat, dtype=float).ravel()
    if y.shape != yhat.shape:
        raise ShapeError(f"lengths differ ({y.size} vs {yhat.size})")
    if y.size < 2:
        raise ShapeError("r_squared needs at least 2 samples")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise UndefinedFitError("y is constant; R^2 is undefined")
    return 1.0 - float(np.sum((y - yhat) ** 2)) / ss_tot


def _r2_or_nan(y, yhat) -> float:
    try:
        return r_squared(y, yhat)
    except UndefinedFitError:
        return float("nan")


@dataclass(frozen=True)
class PowerLawFit:
    """``p_f = C (1 - phi/100)^n``; ``r_squared`` is NaN for a constant response."""

    C: float
    n: float
    r_squared: float

    def __call__(self, phi):
        return self.C * (1.0 - np.asarray(phi, dtype=float) / 100.0) ** self.n


@dataclass(frozen=True)
class ExponentialFit:
    """``y = a exp(b x)``."""

    a: float
    b: float
    r_squared: float

    def __call__(self, x):
        return self.a * np.exp(self.b * np.asarray(x, dtype=float))


def _xy(points):
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ShapeError("points must be an (n, 2) array")
    if pts.shape[0] < 3:
        raise InsufficientDataError(f"need at least 3 points, got {pts.shape[0]}")
    if not np.all(np.isfinite(pts)):
        raise ShapeError("points must be finite")
    return pts[:, 0], pts[:, 1]


def _line(x, y):
    """Least-squares line through (x, y) with duplicated x averaged first."""
    ux, inv = np.unique(x, return_inverse=True)
    if ux.size < 2:
        raise InsufficientDataError("need at least 2 distinct abscissae")
    uy = np.bincount(inv, weights=y) / np.bincount(inv)
    slope, intercept = np.polyfit(ux, uy, 1)
    return float(slope), float(intercept)


def fit_power_law(points) -> PowerLawFit:
    """Fit ``p_f = C (1 - phi/100)^n`` to ``(phi %, p_f)`` pairs.

    The law is a straight line in log-log coordinates; R^2 is reported on
    the original scale.
    """
    phi, pf = _xy(points)
    if np.any(phi >= 100.0) or np.any(phi < 0.0):
        raise DomainError("porosity must satisfy 0 <= phi < 100")
    if np.any(pf <= 0.0):
        raise DomainError("p_f must be positive for a log-log fit")
    n, logc = _line(np.log1p(-phi / 100.0), np.log(pf))
    fit = PowerLawFit(float(np.exp(logc)), n, float("nan"))
    return PowerLawFit(fit.C, fit.n, _r2_or_nan(pf, fit(phi)))


def fit_exponential(points) -> ExponentialFit:
    """Fit ``y = a exp(b x)`` via a line through ``log|y|``; ``sign(a) = sign(y)``."""
    x, y = _xy(points)
    if np.any(y == 0.0) or (np.any(y > 0) and np.any(y < 0)):
        raise DomainError("y must be nonzero and of one sign")
    sign = 1.0 if y[0] > 0 else -1.0
    b, loga = _line(x, np.log(np.abs(y)))
    fit = ExponentialFit(sign * float(np.exp(loga)), b, float("nan"))
    return ExponentialFit(fit.a, fit.b, _r2_or_nan(y, fit(x)))
