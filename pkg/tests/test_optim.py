import numpy as np
import pytest
from scipy.optimize import least_squares

from blockid.optim import levenberg_marquardt


def rosenbrock(x, jac):
    r = np.array([10 * (x[1] - x[0] ** 2), 1 - x[0]])
    J = np.array([[-20 * x[0], 10.0], [-1.0, 0.0]]) if jac else None
    return r, J


def test_rosenbrock_minimum():
    res = levenberg_marquardt(rosenbrock, [-1.2, 1.0], max_iterations=500, ftol=0.0)
    np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-7)
    assert res.cost < 1e-14


def test_exponential_fit_agrees_with_scipy(rng):
    t = np.linspace(0, 3, 40)
    y = 2.5 * np.exp(-1.3 * t) + 0.01 * rng.normal(size=t.size)

    def res(p, jac):
        e = np.exp(-p[1] * t)
        r = p[0] * e - y
        return r, (np.column_stack([e, -p[0] * t * e]) if jac else None)

    ours = levenberg_marquardt(res, [1.0, 0.5], ftol=1e-14, gtol=1e-14)
    ref = least_squares(lambda p: res(p, False)[0], [1.0, 0.5], xtol=1e-14, ftol=1e-14)
    np.testing.assert_allclose(ours.x, ref.x, rtol=1e-6)


def test_cost_history_is_monotone():
    res = levenberg_marquardt(rosenbrock, [-1.2, 1.0], max_iterations=100)
    assert all(b <= a for a, b in zip(res.history, res.history[1:]))


def test_inadmissible_region_is_avoided():
    # minimum of (x-2)^2 sits outside the admissible set x < 1
    def res(x, jac):
        if x[0] >= 1.0:
            return None
        return np.array([x[0] - 2.0]), (np.ones((1, 1)) if jac else None)

    out = levenberg_marquardt(res, [0.0], max_iterations=200)
    assert out.x[0] < 1.0 and out.x[0] > 0.9
    assert levenberg_marquardt(res, [5.0]).status == "inadmissible start"
