"""Static piecewise-linear nonlinearities and block-oriented model composition.

Model structures (``u_c`` are the input channels, ``H1_c`` per-channel front
filters, ``g`` the static map and ``H2`` the shared back filter):

=====================  ==========================================
Linear                 y = sum_c H_c u_c
Hammerstein            y = H2 g(sum_c u_c)
Wiener                 y = g(sum_c H1_c u_c)
WienerHammerstein      y = H2 g(sum_c H1_c u_c)
=====================  ==========================================

For several input channels the front-filter outputs are summed before the
single shared nonlinearity.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import __version__
from .errors import InvalidModelError, ModelFileError, ShapeError
from .lti import TransferFunction, dc_gain, identity, simulate_tf

MODEL_SCHEMA = "blockid-model v1"
NORMALIZATION = "front unit DC gain; back unit DC gain; gains folded into g"

__all__ = [
    "Kind",
    "PiecewiseLinearMap",
    "BlockModel",
    "ModelBundle",
    "eval_pwl",
    "simulate_model",
    "normalize_gains",
    "save_model",
    "load_model",
    "model_to_dict",
    "model_from_dict",
]


class Kind(str, Enum):
    LINEAR = "Linear"
    HAMMERSTEIN = "Hammerstein"
    WIENER = "Wiener"
    WIENER_HAMMERSTEIN = "WienerHammerstein"

    @classmethod
    def parse(cls, text) -> "Kind":
        if isinstance(text, Kind):
            return text
        key = str(text).replace("-", "").replace("_", "").lower()
        aliases = {"linear": cls.LINEAR, "lin": cls.LINEAR, "hammerstein": cls.HAMMERSTEIN, "hs": cls.HAMMERSTEIN,
                   "wiener": cls.WIENER, "wienerhammerstein": cls.WIENER_HAMMERSTEIN, "wh": cls.WIENER_HAMMERSTEIN}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown model kind {text!r}") from None

    @property
    def has_front(self) -> bool:
        return self in (Kind.LINEAR, Kind.WIENER, Kind.WIENER_HAMMERSTEIN)

    @property
    def has_nonlinearity(self) -> bool:
        return self is not Kind.LINEAR

    @property
    def has_back(self) -> bool:
        return self in (Kind.HAMMERSTEIN, Kind.WIENER_HAMMERSTEIN)


@dataclass(frozen=True)
class PiecewiseLinearMap:
    """Continuous piecewise-linear map through ``(breakpoints[k], values[k])``.

    Outside the outermost breakpoints the first/last segment is continued
    linearly.
    """

    breakpoints: tuple
    values: tuple

    def __post_init__(self):
        x = tuple(float(v) for v in np.ravel(self.breakpoints))
        y = tuple(float(v) for v in np.ravel(self.values))
        if len(x) < 2 or len(x) != len(y):
            raise InvalidModelError("a piecewise-linear map needs >= 2 breakpoints and one value per breakpoint")
        if not (all(map(math.isfinite, x)) and all(map(math.isfinite, y))):
            raise InvalidModelError("breakpoints and values must be finite")
        if any(b <= a for a, b in zip(x, x[1:])):
            raise InvalidModelError("breakpoints must be strictly increasing")
        object.__setattr__(self, "breakpoints", x)
        object.__setattr__(self, "values", y)

    @classmethod
    def identity(cls, lo=-1.0, hi=1.0, count=10):
        bp = np.linspace(lo, hi, count)
        return cls(bp, bp)

    @property
    def n_breakpoints(self) -> int:
        return len(self.breakpoints)

    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.breakpoints)

    def __call__(self, x):
        return eval_pwl(self, x)


def _segments(bp: np.ndarray, x: np.ndarray) -> np.ndarray:
    k = np.searchsorted(bp, x, side="right") - 1
    return np.clip(k, 0, bp.size - 2)


def pwl_eval_arrays(bp: np.ndarray, vals: np.ndarray, x):
    k = _segments(bp, x)
    x0 = bp[k]
    v0 = vals[k]
    slope = (vals[k + 1] - v0) / (bp[k + 1] - x0)
    return v0 + slope * (x - x0)


def eval_pwl(pwl: PiecewiseLinearMap, x):
    """Evaluate the map at a scalar or array ``x``."""
    bp = np.asarray(pwl.breakpoints)
    vals = np.asarray(pwl.values)
    xa = np.asarray(x, dtype=float)
    out = pwl_eval_arrays(bp, vals, xa)
    if np.ndim(x) == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class BlockModel:
    kind: Kind
    input_channels: int = 1
    channels: tuple | None = None
    nonlinearity: PiecewiseLinearMap | None = None
    back: TransferFunction | None = None

    def __post_init__(self):
        kind = Kind.parse(self.kind)
        object.__setattr__(self, "kind", kind)
        m = int(self.input_channels)
        if m < 1:
            raise InvalidModelError("a model needs at least one input channel")
        object.__setattr__(self, "input_channels", m)
        if self.channels is not None:
            object.__setattr__(self, "channels", tuple(self.channels))
        present = (self.channels is not None, self.nonlinearity is not None, self.back is not None)
        expected = (kind.has_front, kind.has_nonlinearity, kind.has_back)
        if present != expected:
            names = ("per-channel linear blocks", "nonlinearity", "back linear block")
            wrong = [f"{'missing' if e else 'unexpected'} {n}" for n, p, e in zip(names, present, expected) if p != e]
            raise InvalidModelError(f"{kind.value} model structure mismatch: {', '.join(wrong)}")
        if self.channels is not None:
            if len(self.channels) != m:
                raise InvalidModelError(f"{len(self.channels)} channel blocks for {m} input channels")
            if not all(isinstance(tf, TransferFunction) for tf in self.channels):
                raise InvalidModelError("channel blocks must be TransferFunction instances")

    def transfer_functions(self) -> list:
        out = list(self.channels or ())
        if self.back is not None:
            out.append(self.back)
        return out

    @property
    def n_params(self) -> int:
        n = sum(tf.n_params for tf in self.transfer_functions())
        if self.nonlinearity is not None:
            n += 2 * self.nonlinearity.n_breakpoints
        return n

    def orders(self) -> dict:
        """Pole/zero counts of the dynamic blocks (useful in reports)."""
        out = {}
        if self.channels is not None:
            out["front"] = [(tf.n_poles, tf.n_zeros) for tf in self.channels]
        if self.back is not None:
            out["back"] = (self.back.n_poles, self.back.n_zeros)
        return out


def _as_inputs(inputs, m: int) -> np.ndarray:
    u = np.asarray(inputs, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    if u.ndim != 2 or u.shape[1] != m:
        raise ShapeError(f"model expects {m} input channel(s), got array of shape {np.shape(inputs)}")
    return u


def front_output(model: BlockModel, inputs) -> np.ndarray:
    """Signal entering the nonlinearity (or the output, for Linear models)."""
    u = _as_inputs(inputs, model.input_channels)
    if model.channels is None:
        return u.sum(axis=1)
    x = np.zeros(u.shape[0])
    for c, tf in enumerate(model.channels):
        x = x + simulate_tf(tf, u[:, c])
    return x


def simulate_model(model: BlockModel, inputs) -> np.ndarray:
    """Free-run (zero initial state) response of ``model`` to ``inputs`` (N x m)."""
    x = front_output(model, inputs)
    if model.nonlinearity is not None:
        x = eval_pwl(model.nonlinearity, x)
    if model.back is not None:
        x = simulate_tf(model.back, x)
    return np.asarray(x, dtype=float)


def normalize_gains(model: BlockModel, tol: float = 1e-10) -> BlockModel:
    """Canonical gain convention for models with a nonlinearity.

    The front blocks are scaled so that the channel with the largest |DC gain|
    has DC gain +1 and the back block to unit DC gain; the removed gains are
    absorbed by the breakpoints (front) and values (back) of ``g``.  Blocks
    whose DC gain is ~0 or undefined are left alone.  The simulated output is
    unchanged up to rounding.
    """
    if model.nonlinearity is None:
        return model
    bp = np.asarray(model.nonlinearity.breakpoints)
    vals = np.asarray(model.nonlinearity.values)
    channels = model.channels
    back = model.back
    if channels is not None:
        gains = []
        for tf in channels:
            try:
                gains.append(dc_gain(tf))
            except InvalidModelError:
                gains.append(0.0)
        s = gains[int(np.argmax(np.abs(gains)))]
        if abs(s) > tol and np.isfinite(s):
            channels = tuple(tf.scaled(1.0 / s) for tf in channels)
            bp = bp / s
            if s < 0:
                bp, vals = bp[::-1], vals[::-1]
    if back is not None:
        try:
            k = dc_gain(back)
        except InvalidModelError:
            k = 0.0
        if abs(k) > tol and np.isfinite(k):
            back = back.scaled(1.0 / k)
            vals = vals * k
    return BlockModel(model.kind, model.input_channels, channels, PiecewiseLinearMap(bp, vals), back)


@dataclass(frozen=True)
class ModelBundle:
    """One MISO model per output channel plus provenance metadata."""

    models: tuple
    metadata: Mapping = field(default_factory=dict)

    def __post_init__(self):
        models = tuple(self.models)
        if not models:
            raise InvalidModelError("a bundle needs at least one model")
        m = {mod.input_channels for mod in models}
        if len(m) != 1:
            raise InvalidModelError("all models in a bundle must share the input channel count")
        object.__setattr__(self, "models", models)
        object.__setattr__(self, "metadata", dict(self.metadata))

    def __len__(self):
        return len(self.models)

    def __getitem__(self, i) -> BlockModel:
        return self.models[i]

    @property
    def input_channels(self) -> int:
        return self.models[0].input_channels

    def simulate(self, inputs) -> np.ndarray:
        return np.column_stack([simulate_model(mod, inputs) for mod in self.models])


# ------------------------------------------------------------------ serialization

def _tf_to_dict(tf: TransferFunction) -> dict:
    return {"numerator": list(tf.numerator), "denominator": list(tf.denominator), "input_delay": tf.input_delay}


def _tf_from_dict(d, where) -> TransferFunction:
    try:
        num = [float(x) for x in d["numerator"]]
        den = [float(x) for x in d["denominator"]]
        delay = d.get("input_delay", 0)
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"{where}: malformed transfer function ({exc})") from None
    if not den or den[0] != 1.0:
        raise ModelFileError(f"{where}: denominator is not monic")
    try:
        return TransferFunction(num, den, delay)
    except InvalidModelError as exc:
        raise ModelFileError(f"{where}: {exc}") from None


def model_to_dict(model: BlockModel) -> dict:
    d = {"kind": model.kind.value, "input_channels": model.input_channels}
    if model.channels is not None:
        d["channels"] = [_tf_to_dict(tf) for tf in model.channels]
    if model.nonlinearity is not None:
        d["nonlinearity"] = {
            "type": "piecewise_linear",
            "breakpoints": list(model.nonlinearity.breakpoints),
            "values": list(model.nonlinearity.values),
        }
    if model.back is not None:
        d["back"] = _tf_to_dict(model.back)
    return d


def model_from_dict(d: Mapping, where: str = "model") -> BlockModel:
    if not isinstance(d, Mapping):
        raise ModelFileError(f"{where}: expected an object")
    try:
        kind = Kind.parse(d["kind"])
        m = int(d["input_channels"])
    except (KeyError, ValueError) as exc:
        raise ModelFileError(f"{where}: bad kind/input_channels ({exc})") from None
    channels = None
    if "channels" in d:
        channels = tuple(_tf_from_dict(c, f"{where}.channels[{i}]") for i, c in enumerate(d["channels"]))
    nl = None
    if "nonlinearity" in d:
        spec = d["nonlinearity"]
        if spec.get("type", "piecewise_linear") != "piecewise_linear":
            raise ModelFileError(f"{where}: unsupported nonlinearity type {spec.get('type')!r}")
        try:
            nl = PiecewiseLinearMap(spec["breakpoints"], spec["values"])
        except (KeyError, InvalidModelError) as exc:
            raise ModelFileError(f"{where}.nonlinearity: {exc}") from None
    back = _tf_from_dict(d["back"], f"{where}.back") if "back" in d else None
    try:
        return BlockModel(kind, m, channels, nl, back)
    except InvalidModelError as exc:
        raise ModelFileError(f"{where}: {exc}") from None


def _jsonable(obj):
    if isinstance(obj, Mapping):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Enum):
        return obj.value
    return obj


def dumps_bundle(bundle: ModelBundle) -> str:
    doc = {
        "schema": MODEL_SCHEMA,
        "version": __version__,
        "normalization": NORMALIZATION,
        "input_scale": "fraction (percent / 100)",
        "metadata": _jsonable(dict(sorted(bundle.metadata.items()))),
        "models": [model_to_dict(mod) for mod in bundle.models],
    }
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def save_model(bundle, path) -> None:
    """Write a bundle (or a single model) as canonical JSON text."""
    if isinstance(bundle, BlockModel):
        bundle = ModelBundle((bundle,))
    Path(path).write_text(dumps_bundle(bundle), encoding="utf-8")


def loads_bundle(text: str) -> ModelBundle:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"not a valid model file: {exc}") from None
    if not isinstance(doc, dict) or doc.get("schema") != MODEL_SCHEMA:
        found = doc.get("schema") if isinstance(doc, dict) else None
        raise ModelFileError(f"schema mismatch: expected {MODEL_SCHEMA!r}, found {found!r}")
    models = doc.get("models")
    if not isinstance(models, list) or not models:
        raise ModelFileError("model file lists no models")
    parsed = tuple(model_from_dict(d, f"models[{i}]") for i, d in enumerate(models))
    try:
        return ModelBundle(parsed, doc.get("metadata", {}))
    except InvalidModelError as exc:
        raise ModelFileError(str(exc)) from None


def load_model(path) -> ModelBundle:
    return loads_bundle(Path(path).read_text(encoding="utf-8"))


def identity_model(kind=Kind.WIENER_HAMMERSTEIN, input_channels: int = 1, lo=-1.0, hi=1.0) -> BlockModel:
    """Model whose output equals the sum of its inputs."""
    kind = Kind.parse(kind)
    return BlockModel(
        kind,
        input_channels,
        tuple(identity() for _ in range(input_channels)) if kind.has_front else None,
        PiecewiseLinearMap.identity(lo, hi, 2) if kind.has_nonlinearity else None,
        identity() if kind.has_back else None,
    )
