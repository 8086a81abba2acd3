import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from blockid.curvefit import fit_exponential, fit_power_law, r_squared
from blockid.errors import DomainError, InsufficientDataError, UndefinedFitError

PHI = np.array([68.0, 76.0, 82.0, 86.0])


def law(C, n, phi):
    return C * (1 - phi / 100.0) ** n


def test_power_law_recovery_on_porosity_grid():
    fit = fit_power_law(np.column_stack([PHI, law(2.0, 1.5, PHI)]))
    assert fit.C == pytest.approx(2.0, abs=1e-6)
    assert fit.n == pytest.approx(1.5, abs=1e-6)
    assert fit.r_squared >= 1 - 1e-9


@given(st.floats(0.01, 100.0), st.floats(-3.0, 3.0))
def test_power_law_recovery_property(C, n):
    fit = fit_power_law(np.column_stack([PHI, law(C, n, PHI)]))
    assert fit.C == pytest.approx(C, rel=1e-6)
    assert fit.n == pytest.approx(n, abs=1e-6)


def test_power_law_flat_and_duplicate_cases():
    flat = fit_power_law(np.column_stack([PHI, np.full(4, 3.0)]))
    assert flat.n == pytest.approx(0.0, abs=1e-12) and flat.C == pytest.approx(3.0)
    dup = fit_power_law([[68.0, 1.0], [86.0, 0.5], [86.0, 0.5]])
    assert dup.r_squared == pytest.approx(1.0)
    assert dup(68.0) == pytest.approx(1.0) and dup(86.0) == pytest.approx(0.5)


def test_power_law_domain():
    with pytest.raises(DomainError):
        fit_power_law([[68, 1.0], [100, 1.0], [80, 1.0]])
    with pytest.raises(DomainError):
        fit_power_law([[68, 1.0], [76, 0.0], [80, 1.0]])
    with pytest.raises(InsufficientDataError):
        fit_power_law([[68, 1.0], [76, 0.5]])


def test_power_law_noisy_r2():
    good = 0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        phi = np.repeat(PHI, 3)
        pf = law(2.0, 1.5, phi) * (1 + 0.05 * rng.normal(size=phi.size))
        good += fit_power_law(np.column_stack([phi, pf])).r_squared >= 0.75
    assert good >= 8


@pytest.mark.parametrize("a, b", [(1.0, 2.0), (-0.5, -1.0)])
def test_exponential_recovery(a, b):
    x = np.array([0.0, 0.5, 1.0])
    fit = fit_exponential(np.column_stack([x, a * np.exp(b * x)]))
    assert fit.a == pytest.approx(a, abs=1e-9) and fit.b == pytest.approx(b, abs=1e-9)


def test_exponential_constant_and_domain():
    fit = fit_exponential([[0, 3.0], [1, 3.0], [2, 3.0]])
    assert fit.a == pytest.approx(3.0) and fit.b == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(DomainError):
        fit_exponential([[0, 1.0], [1, -1.0], [2, 1.0]])


def test_r_squared_examples():
    assert r_squared([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0, abs=1e-9)
    assert r_squared([1, 2, 3], [2, 2, 2]) == pytest.approx(0.0, abs=1e-9)
    assert r_squared([0, 2], [0, 0]) == pytest.approx(-1.0, abs=1e-9)
    with pytest.raises(UndefinedFitError):
        r_squared([1, 1], [1, 2])
