"""Levenberg-Marquardt minimization of a sum of squared residuals.

The residual function may refuse a trial point (returning ``None``), e.g.
when a step would make a filter unstable or reorder breakpoints.  Refused
steps are treated like steps that increase the cost: the step is rejected
and the damping grows.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class LMResult:
    x: np.ndarray
    cost: float
    iterations: int
    status: str
    history: list = field(default_factory=list)


def levenberg_marquardt(
    residuals,
    x0,
    max_iterations: int = 200,
    ftol: float = 1e-9,
    fwindow: int = 5,
    gtol: float = 1e-8,
    xtol: float = 1e-10,
) -> LMResult:
    """Minimize ``sum(r**2)`` starting from ``x0``.

    ``residuals(x, jac)`` returns ``(r, J)`` (``J`` may be ``None`` when
    ``jac`` is false) or ``None`` for an inadmissible ``x``.

    Stops after ``max_iterations`` trial steps, when the cost dropped by less
    than a fraction ``ftol`` over the last ``fwindow`` accepted steps, when
    ``max|J^T r| < gtol`` or when an accepted step is shorter than
    ``xtol * (|x| + xtol)``.
    """
    x = np.array(x0, dtype=float)
    out = residuals(x, True)
    if out is None:
        return LMResult(x, np.inf, 0, "inadmissible start")
    r, J = out
    cost = float(r @ r)
    history = [cost]
    A = J.T @ J
    g = J.T @ r
    diag = np.diag(A).copy()
    lam = 1e-3  # relative to diag(J^T J), so dimensionless
    nu = 2.0
    it = 0
    status = "max iterations"
    while it < max_iterations:
        if cost == 0.0:
            status = "zero cost"
            break
        if not g.size or np.max(np.abs(g)) < gtol:
            status = "gradient"
            break
        floor = 1e-12 * (diag.max() if diag.max() > 0 else 1.0)
        D = np.maximum(diag, floor)
        it += 1
        try:
            step = np.linalg.solve(A + lam * np.diag(D), -g)
        except np.linalg.LinAlgError:
            lam *= nu
            nu *= 2.0
            continue
        trial = residuals(x + step, False)
        rho = -1.0
        if trial is not None:
            rt = trial[0]
            ct = float(rt @ rt)
            predicted = -(2.0 * (step @ g) + step @ (A @ step))
            if ct < cost and predicted > 0:
                rho = (cost - ct) / predicted
        if rho > 0:
            full = residuals(x + step, True)
            if full is None:  # pragma: no cover - trial already admitted this point
                lam *= nu
                nu *= 2.0
                continue
            x = x + step
            small_step = np.linalg.norm(step) < xtol * (np.linalg.norm(x) + xtol)
            r, J = full
            cost = float(r @ r)
            A = J.T @ J
            g = J.T @ r
            diag = np.diag(A).copy()
            lam *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
            nu = 2.0
            history.append(cost)
            if small_step:
                status = "step"
                break
            if len(history) > fwindow:
                ref = history[-1 - fwindow]
                if ref - cost <= ftol * ref:
                    status = "cost stalled"
                    break
        else:
            lam *= nu
            nu *= 2.0
            if lam > 1e30:
                status = "damping"
                break
    return LMResult(x, cost, it, status, history)
