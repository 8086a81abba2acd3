import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from blockid.blockmodel import (
    BlockModel,
    Kind,
    ModelBundle,
    PiecewiseLinearMap,
    dumps_bundle,
    eval_pwl,
    identity_model,
    load_model,
    loads_bundle,
    normalize_gains,
    save_model,
    simulate_model,
)
from blockid.errors import InvalidModelError, ModelFileError, ShapeError
from blockid.lti import TransferFunction, dc_gain, identity

DELAY = TransferFunction([0.0, 1.0], [1.0])
V = PiecewiseLinearMap([-1, 0, 1], [1, 0, 1])


@pytest.mark.parametrize("bp, vals, x, y", [([0, 1], [0, 1], 0.5, 0.5), ([0, 1], [0, 1], 2.0, 2.0),
                                            ([-1, 0, 1], [1, 0, 1], -0.5, 0.5)])
def test_pwl_examples(bp, vals, x, y):
    assert eval_pwl(PiecewiseLinearMap(bp, vals), x) == pytest.approx(y, abs=1e-15)


def test_pwl_invalid():
    with pytest.raises(InvalidModelError):
        PiecewiseLinearMap([0, 0], [1, 2])
    with pytest.raises(InvalidModelError):
        PiecewiseLinearMap([0], [1])


@given(st.lists(st.floats(-10, 10), min_size=2, max_size=8, unique=True), st.data())
def test_pwl_interpolates_nodes(xs, data):
    bp = sorted(xs)
    if min(np.diff(bp)) < 1e-6:
        return
    vals = data.draw(st.lists(st.floats(-10, 10), min_size=len(bp), max_size=len(bp)))
    g = PiecewiseLinearMap(bp, vals)
    np.testing.assert_allclose(g(np.array(bp)), vals, atol=1e-9)


def test_identity_wh_composition(rng):
    u = rng.normal(size=30)
    np.testing.assert_allclose(simulate_model(identity_model(Kind.WIENER_HAMMERSTEIN), u), u, atol=1e-15)


def test_hammerstein_square_then_delay():
    # brute force: g(x) = x^2 on the integers 0, 1, 2, then one sample of delay
    sq = PiecewiseLinearMap([0, 1, 2], [0, 1, 4])
    model = BlockModel(Kind.HAMMERSTEIN, 1, None, sq, DELAY)
    np.testing.assert_allclose(simulate_model(model, [1.0, 2.0, 0.0]), [0, 1, 4])


def test_wiener_delay_then_v():
    model = BlockModel(Kind.WIENER, 1, (DELAY,), V)
    np.testing.assert_allclose(simulate_model(model, [1.0, -1.0, 0.0]), [0, 1, 1])


def test_miso_channels_sum_before_nonlinearity(rng):
    h = (TransferFunction([0.5], [1, -0.5]), TransferFunction([0.2, 0.1], [1, -0.3]))
    model = BlockModel(Kind.WIENER, 2, h, V)
    u = rng.normal(size=(40, 2))
    from blockid.lti import simulate_tf
    x = simulate_tf(h[0], u[:, 0]) + simulate_tf(h[1], u[:, 1])
    np.testing.assert_allclose(simulate_model(model, u), V(x), atol=1e-14)
    with pytest.raises(ShapeError):
        simulate_model(model, u[:, :1])


def test_structure_invariants():
    with pytest.raises(InvalidModelError):
        BlockModel(Kind.HAMMERSTEIN, 1, (identity(),), V, identity())
    with pytest.raises(InvalidModelError):
        BlockModel(Kind.LINEAR, 2, (identity(),))


def random_model(rng, kind, m=2):
    def tf():
        p = rng.uniform(-0.9, 0.9)
        return TransferFunction(rng.normal(size=2), [1.0, -p])
    chans = tuple(tf() for _ in range(m)) if kind.has_front else None
    g = PiecewiseLinearMap(np.sort(rng.uniform(-2, 2, 5)) + np.arange(5), rng.normal(size=5)) if kind.has_nonlinearity else None
    return BlockModel(kind, m, chans, g, tf() if kind.has_back else None)


@pytest.mark.parametrize("kind", list(Kind))
def test_normalize_gains_preserves_output(rng, kind):
    model = random_model(rng, kind)
    u = rng.normal(size=(300, 2))
    norm = normalize_gains(model)
    np.testing.assert_allclose(simulate_model(norm, u), simulate_model(model, u), rtol=1e-9, atol=1e-9)
    if kind.has_back:
        assert dc_gain(norm.back) == pytest.approx(1.0)
    if kind is Kind.WIENER or kind is Kind.WIENER_HAMMERSTEIN:
        assert max(abs(dc_gain(tf)) for tf in norm.channels) == pytest.approx(1.0)


@pytest.mark.parametrize("kind", list(Kind))
def test_bundle_roundtrip(tmp_path, rng, kind):
    bundle = ModelBundle((random_model(rng, kind), random_model(rng, kind)), {"seed": 3, "tool": "blockid"})
    save_model(bundle, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    assert back.models == bundle.models
    assert back.metadata == bundle.metadata
    assert dumps_bundle(back) == dumps_bundle(bundle)


def _doc(model):
    return json.loads(dumps_bundle(ModelBundle((model,))))


def test_load_rejects_front_block_on_hammerstein():
    doc = _doc(BlockModel(Kind.HAMMERSTEIN, 1, None, V, identity()))
    doc["models"][0]["channels"] = [{"numerator": [1.0], "denominator": [1.0]}]
    with pytest.raises(ModelFileError):
        loads_bundle(json.dumps(doc))


def test_load_rejects_nonmonic_and_schema():
    doc = _doc(BlockModel(Kind.LINEAR, 1, (identity(),)))
    doc["models"][0]["channels"][0]["denominator"] = [2.0, 1.0]
    with pytest.raises(ModelFileError):
        loads_bundle(json.dumps(doc))
    doc = _doc(BlockModel(Kind.LINEAR, 1, (identity(),)))
    doc["schema"] = "something else"
    with pytest.raises(ModelFileError, match="schema"):
        loads_bundle(json.dumps(doc))
