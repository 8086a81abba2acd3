import math

import numpy as np
import pytest

from blockid.blockmodel import PiecewiseLinearMap, simulate_model
from blockid.errors import InvalidModelError, NoCycleError, UnknownPlantError
from blockid.plant import (
    ContinuousBlock,
    ExcitationProgram,
    PlantKind,
    PlantSpec,
    SensingChain,
    catalog_names,
    generate_excitation,
    get_plant,
    hysteresis_loop,
    simulate_plant,
    standard_datasets,
)

DT = 0.1


def test_step_cycles_trace():
    p = generate_excitation(ExcitationProgram.steps(-20.0, on_s=10.0, off_s=10.0, cycles=3), DT)
    assert p.shape == (600,)
    expected = np.tile(np.r_[np.full(100, -20.0), np.zeros(100)], 3)
    np.testing.assert_array_equal(p, expected)


def test_gradual_staircase():
    p = generate_excitation(ExcitationProgram.gradual(hold_s=10.0), DT)
    levels = [p[k] for k in range(0, p.size, 100)]
    assert levels == [-10, -20, -40, -60, -40, -20, -10, 0]
    turn = int(np.argmin(p))
    assert np.all(np.diff(p[:turn + 1]) <= 0) and np.all(np.diff(p[turn:]) >= 0)


def test_miso_pulses_cover_all_subsets():
    p = generate_excitation(ExcitationProgram.steps(-10.0, 3), DT)
    assert p.shape == (1400, 3)
    active = {tuple(np.flatnonzero(row)) for row in p if row.any()}
    assert active == {(0,), (1,), (2,), (0, 1), (1, 2), (0, 2), (0, 1, 2)}


def test_zoh_lag_matches_closed_form():
    tf = ContinuousBlock.lag(2.0, 0.8).discretize(DT)
    a = math.exp(-DT / 0.8)
    np.testing.assert_allclose(tf.denominator, [1.0, -a], rtol=1e-12)
    np.testing.assert_allclose(np.sum(tf.numerator), 2.0 * (1 - a), rtol=1e-12)


def test_zoh_second_order_step_is_exact_at_samples():
    wn, z, k = 1.8, 0.6, -3.0
    tf = ContinuousBlock.second_order(k, wn, z).discretize(DT)
    from blockid.lti import simulate_tf
    y = simulate_tf(tf, np.ones(80))
    t = DT * np.arange(1, 81)
    wd = wn * math.sqrt(1 - z * z)
    exact = k * (1 - np.exp(-z * wn * t) * (np.cos(wd * t) + z * wn / wd * np.sin(wd * t)))
    # ZOH output at sample n equals the continuous step response at t = n*dt, one sample late
    np.testing.assert_allclose(y[1:], exact[:-1], atol=1e-12)


def test_unstable_or_inconsistent_specs_rejected():
    with pytest.raises(InvalidModelError):
        ContinuousBlock((1.0,), (1.0, -0.5))
    with pytest.raises(InvalidModelError):
        PlantSpec("x", PlantKind.WIENER, front=(ContinuousBlock.static(),))


def test_sensing_chain_saturates_and_rests_at_zero():
    s = SensingChain()
    dr = s.resistance_change(np.full(400, -1e4), DT)
    assert dr[-1] == pytest.approx(-85.0, rel=1e-9)
    assert np.all(s.resistance_change(np.zeros(10), DT) == 0.0)


@pytest.mark.parametrize("name", catalog_names())
def test_rest_state_and_determinism(name):
    spec = get_plant(name)
    zero = np.zeros((50, spec.n_inputs))
    ds = simulate_plant(PlantSpec(**{**spec.__dict__, "noise": 0.0}), zero, DT, seed=1)
    assert np.all(ds.inputs == 0.0) and np.all(ds.outputs == 0.0)
    a, b = standard_datasets(spec, seed=4), standard_datasets(spec, seed=4)
    for x, y in zip(a[0] + a[1], b[0] + b[1]):
        assert x == y
    c = standard_datasets(spec, seed=5)
    if spec.noise > 0:
        assert not np.array_equal(a[0][0].outputs, c[0][0].outputs)


def test_standard_split_names_and_roles():
    ident, val = standard_datasets(get_plant("foam-wh"))
    assert [d.name for d in ident] == ["gradual", "step-10", "step-60"]
    assert [d.name for d in val] == ["step-20", "step-40"]
    ident, val = standard_datasets(get_plant("miso3"))
    assert [d.name for d in ident] == ["step-10", "step-60"] and ident[0].n_inputs == 3
    assert ident[0].output_names == ("theta_x[deg]", "theta_y[deg]", "dz[mm]")


def test_noise_level_is_fraction_of_range():
    spec = get_plant("foam-wh")
    clean, _ = standard_datasets(spec, seed=0, noise=0.0)
    noisy, _ = standard_datasets(spec, seed=0, noise=0.02)
    resid = noisy[0].outputs[:, 0] - clean[0].outputs[:, 0]
    assert np.std(resid) == pytest.approx(0.02 * np.ptp(clean[0].outputs), rel=0.1)


def test_pwl_plant_matches_its_true_model():
    g = PiecewiseLinearMap([-1.0, -0.3, 0.0, 1.0], [-2.0, -0.4, 0.0, 1.0])
    spec = PlantSpec("pwl", PlantKind.WH, (ContinuousBlock.second_order(1.0, 2.0, 0.5),), g, ContinuousBlock.lag(1.0, 0.8))
    ident, _ = standard_datasets(spec)
    for d in ident:
        np.testing.assert_allclose(simulate_model(spec.true_model(DT), d.inputs / 100.0), d.outputs[:, 0], atol=1e-12)


def test_miso3_pose_geometry():
    spec = get_plant("miso3")
    equal = spec.geometry.pose(np.full((1, 3), 20.0))[0]
    assert equal[0] == pytest.approx(0.0, abs=1e-12) and equal[1] == pytest.approx(0.0, abs=1e-12)
    assert equal[2] == pytest.approx(10.0)  # 20 % of 50 mm
    tilt = spec.geometry.pose(np.array([[20.0, 0.0, 0.0]]))[0]
    assert tilt[0] < 0 and tilt[1] == pytest.approx(0.0, abs=1e-12)


def test_unknown_plant_lists_catalog():
    with pytest.raises(UnknownPlantError, match="foam-wh"):
        get_plant("nope")


def _clean(name):
    return standard_datasets(get_plant(name), seed=0, noise=0.0)[0]


def test_static_plant_has_no_loop():
    loop = hysteresis_loop(_clean("foam-static")[0])
    assert loop.normalized_area < 0.01


def test_foam_loop_is_positive_and_rate_dependent():
    gradual, _, step60 = _clean("foam-wh")
    slow = hysteresis_loop(gradual)
    fast = hysteresis_loop(step60)
    assert slow.area > 0
    assert fast.normalized_area > slow.normalized_area


def test_no_cycle():
    ds = simulate_plant(get_plant("foam-static"), np.linspace(0, -60, 200), DT)
    with pytest.raises(NoCycleError):
        hysteresis_loop(ds)
