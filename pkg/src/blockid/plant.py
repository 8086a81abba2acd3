"""Synthetic sensorized actuators used as ground truth for identification.

Pressure (kPa gauge, <= 0 for vacuum) drives a sensing chain that produces
the relative resistance change dR (%); the deformation is a block model of
the normalized signal dR/100.  Identifying dR -> deformation therefore
recovers a model of the plant's own class.  The constants of every named
plant live in ``data/plants.json``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.polynomial import Polynomial
from scipy.signal import cont2discrete, lfilter

from .blockmodel import BlockModel, Kind, PiecewiseLinearMap, simulate_model
from .datasets import Role, TimeSeriesDataset
from .errors import InvalidModelError, NoCycleError, ShapeError, UnknownPlantError
from .lti import TransferFunction

__all__ = [
    "PlantKind",
    "ContinuousBlock",
    "ExpSaturation",
    "SensingChain",
    "Miso3Geometry",
    "PlantSpec",
    "ExcitationProgram",
    "HysteresisLoop",
    "generate_excitation",
    "simulate_plant",
    "standard_datasets",
    "load_catalog",
    "get_plant",
    "catalog_names",
    "hysteresis_loop",
    "MISO_SUBSETS",
]


class PlantKind(str, Enum):
    LINEAR = "LinearPlant"
    WIENER = "WienerPlant"
    HAMMERSTEIN = "HammersteinPlant"
    WH = "WHPlant"
    HYSTERETIC_FOAM = "HystereticFoamPlant"
    MISO3 = "Miso3Plant"


_STRUCTURE = {
    PlantKind.LINEAR: Kind.LINEAR,
    PlantKind.WIENER: Kind.WIENER,
    PlantKind.HAMMERSTEIN: Kind.HAMMERSTEIN,
    PlantKind.WH: Kind.WIENER_HAMMERSTEIN,
    PlantKind.HYSTERETIC_FOAM: Kind.WIENER_HAMMERSTEIN,
}


@dataclass(frozen=True)
class ContinuousBlock:
    """Continuous-time transfer function ``num(s)/den(s)``, discretized by ZOH."""

    num: tuple
    den: tuple

    def __post_init__(self):
        num = tuple(float(v) for v in self.num)
        den = tuple(float(v) for v in self.den)
        if not den or den[0] == 0.0:
            raise InvalidModelError("leading denominator coefficient must be nonzero")
        if len(num) > len(den):
            raise InvalidModelError("continuous block must be proper")
        poles = np.roots(den)
        if np.any(poles.real >= 0):
            raise InvalidModelError(f"continuous block is not stable (poles {poles})")
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)

    @classmethod
    def static(cls, gain=1.0):
        return cls((gain,), (1.0,))

    @classmethod
    def lag(cls, gain=1.0, tau=1.0):
        if not tau > 0:
            raise InvalidModelError("time constant must be > 0")
        return cls((gain,), (tau, 1.0))

    @classmethod
    def second_order(cls, gain=1.0, wn=1.0, zeta=0.5):
        if not (wn > 0 and zeta > 0):
            raise InvalidModelError("wn and zeta must be > 0")
        return cls((gain * wn * wn,), (1.0, 2.0 * zeta * wn, wn * wn))

    @classmethod
    def from_dict(cls, d):
        t = d.get("type")
        if t == "static":
            return cls.static(d.get("gain", 1.0))
        if t == "lag":
            return cls.lag(d.get("gain", 1.0), d["tau"])
        if t == "second_order":
            return cls.second_order(d.get("gain", 1.0), d["wn"], d["zeta"])
        if t == "tf":
            return cls(tuple(d["num"]), tuple(d["den"]))
        raise InvalidModelError(f"unknown block type {t!r}")

    def discretize(self, dt: float) -> TransferFunction:
        if len(self.den) == 1:
            return TransferFunction((self.num[0] / self.den[0],), (1.0,))
        b, a, _ = cont2discrete((self.num, self.den), dt, method="zoh")
        b = np.atleast_1d(np.squeeze(b)) / a[0]
        a = np.asarray(a, dtype=float) / a[0]
        b[np.abs(b) < 1e-15 * np.max(np.abs(b))] = 0.0
        a[0] = 1.0
        return TransferFunction(b, a)


@dataclass(frozen=True)
class ExpSaturation:
    """``g(x) = c1 (exp(c2 x) - 1)``; zero at rest."""

    c1: float
    c2: float

    def __call__(self, x):
        return self.c1 * np.expm1(self.c2 * np.asarray(x, dtype=float))


def _nonlinearity_from_dict(d):
    t = d.get("type")
    if t == "exp":
        return ExpSaturation(float(d["c1"]), float(d["c2"]))
    if t == "pwl":
        return PiecewiseLinearMap(d["breakpoints"], d["values"])
    raise InvalidModelError(f"unknown nonlinearity type {t!r}")


@dataclass(frozen=True)
class SensingChain:
    """Pressure (kPa) -> dR (%): exponential saturation followed by a lag."""

    depth_percent: float = 85.0
    pressure_scale_kpa: float = 25.0
    lag_s: float = 0.4

    def resistance_change(self, pressure, dt: float) -> np.ndarray:
        p = np.minimum(np.asarray(pressure, dtype=float), 0.0)
        static = -self.depth_percent * -np.expm1(p / self.pressure_scale_kpa)
        tf = ContinuousBlock.lag(1.0, self.lag_s).discretize(dt)
        return lfilter(tf.numerator, tf.denominator, static, axis=0)


@dataclass(frozen=True)
class Miso3Geometry:
    """Three contractors at the corners of an equilateral triangle."""

    contractor_length_mm: float = 50.0
    triangle_side_mm: float = 52.0

    def corners(self) -> np.ndarray:
        r = self.triangle_side_mm / math.sqrt(3.0)
        ang = np.deg2rad([90.0, 210.0, 330.0])
        return np.column_stack([r * np.cos(ang), r * np.sin(ang)])

    def pose(self, strain_percent) -> np.ndarray:
        """Per-sample (theta_x deg, theta_y deg, dz mm) from contractor strains (N x 3)."""
        dl = self.contractor_length_mm * np.asarray(strain_percent, dtype=float) / 100.0
        xy = self.corners()
        A = np.column_stack([np.ones(3), xy])
        # plane z = c0 + cx x + cy y through the three (lowered) top corners
        c = np.linalg.solve(A, -dl.T)
        theta_x = np.degrees(np.arctan(c[2]))
        theta_y = np.degrees(np.arctan(-c[1]))
        return np.column_stack([theta_x, theta_y, -c[0]])


@dataclass(frozen=True)
class PlantSpec:
    """A named synthetic plant.

    ``noise`` is the output-noise standard deviation as a fraction of each
    dataset's noise-free output range.
    """

    name: str
    kind: PlantKind
    front: tuple = ()
    nonlinearity: object = None
    back: ContinuousBlock | None = None
    noise: float = 0.0
    sensing: SensingChain = field(default_factory=SensingChain)
    output_name: str = "strain[%]"
    contractor: "PlantSpec | None" = None
    geometry: Miso3Geometry | None = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", PlantKind(self.kind))
        if not (self.noise >= 0 and math.isfinite(self.noise)):
            raise ValueError("noise must be >= 0")
        if self.kind is PlantKind.MISO3:
            if self.contractor is None or self.contractor.kind is PlantKind.MISO3:
                raise InvalidModelError("Miso3Plant needs a single-input contractor plant")
            if self.geometry is None:
                object.__setattr__(self, "geometry", Miso3Geometry())
            return
        kind = _STRUCTURE[self.kind]
        if kind.has_front != bool(self.front):
            raise InvalidModelError(f"{self.kind.value} front blocks do not match its structure")
        if kind.has_nonlinearity != (self.nonlinearity is not None):
            raise InvalidModelError(f"{self.kind.value} nonlinearity does not match its structure")
        if kind.has_back != (self.back is not None):
            raise InvalidModelError(f"{self.kind.value} back block does not match its structure")

    @property
    def n_inputs(self) -> int:
        return 3 if self.kind is PlantKind.MISO3 else len(self.front) or 1

    @property
    def input_names(self) -> tuple:
        if self.n_inputs == 1:
            return ("dR[%]",)
        return tuple(f"dR{i + 1}[%]" for i in range(self.n_inputs))

    @property
    def output_names(self) -> tuple:
        if self.kind is PlantKind.MISO3:
            return ("theta_x[deg]", "theta_y[deg]", "dz[mm]")
        return (self.output_name,)

    def true_model(self, dt: float) -> BlockModel:
        """The exact discrete-time block structure (for PWL maps) at ``dt``."""
        if self.kind is PlantKind.MISO3:
            raise InvalidModelError("Miso3Plant has no single block model")
        kind = _STRUCTURE[self.kind]
        g = self.nonlinearity if isinstance(self.nonlinearity, PiecewiseLinearMap) else None
        if kind.has_nonlinearity and g is None:
            raise InvalidModelError("closed-form nonlinearity has no PiecewiseLinearMap form")
        return BlockModel(
            kind,
            self.n_inputs,
            tuple(b.discretize(dt) for b in self.front) if self.front else None,
            g,
            self.back.discretize(dt) if self.back is not None else None,
        )

    def deformation(self, x, dt: float) -> np.ndarray:
        """Noise-free deformation for normalized inputs ``x`` (N x m)."""
        x = np.asarray(x, dtype=float).reshape(len(x), -1)
        if self.kind is PlantKind.MISO3:
            strains = np.column_stack([self.contractor.deformation(x[:, [i]], dt)[:, 0] for i in range(3)])
            return self.geometry.pose(strains)
        v = np.zeros(x.shape[0])
        if self.front:
            for c, blk in enumerate(self.front):
                tf = blk.discretize(dt)
                v = v + lfilter(tf.numerator, tf.denominator, x[:, c])
        else:
            v = x.sum(axis=1)
        if self.nonlinearity is not None:
            v = np.asarray(self.nonlinearity(v), dtype=float)
        if self.back is not None:
            tf = self.back.discretize(dt)
            v = lfilter(tf.numerator, tf.denominator, v)
        return v[:, None]


def _catalog_doc(path=None) -> dict:
    if path is None:
        text = resources.files("blockid").joinpath("data/plants.json").read_text()
    else:
        text = Path(path).read_text()
    return json.loads(text)


def _spec_from_entry(name, entry, entries, sensing) -> PlantSpec:
    kind = PlantKind(entry["kind"])
    if kind is PlantKind.MISO3:
        cname = entry["contractor"]
        contractor = _spec_from_entry(cname, entries[cname], entries, sensing)
        geo = Miso3Geometry(entry.get("contractor_length_mm", 50.0), entry.get("triangle_side_mm", 52.0))
        return PlantSpec(name, kind, noise=entry.get("noise", 0.0), sensing=sensing, contractor=contractor,
                         geometry=geo)
    return PlantSpec(
        name,
        kind,
        front=tuple(ContinuousBlock.from_dict(b) for b in entry.get("front", ())),
        nonlinearity=_nonlinearity_from_dict(entry["nonlinearity"]) if "nonlinearity" in entry else None,
        back=ContinuousBlock.from_dict(entry["back"]) if "back" in entry else None,
        noise=entry.get("noise", 0.0),
        sensing=sensing,
        output_name=entry.get("output", "strain[%]"),
    )


def load_catalog(path=None) -> dict:
    """Named :class:`PlantSpec` objects from the catalog file."""
    doc = _catalog_doc(path)
    s = doc.get("sensing", {})
    sensing = SensingChain(s.get("depth_percent", 85.0), s.get("pressure_scale_kpa", 25.0), s.get("lag_s", 0.4))
    entries = doc["plants"]
    return {name: _spec_from_entry(name, e, entries, sensing) for name, e in entries.items()}


def catalog_names(path=None) -> list:
    return sorted(_catalog_doc(path)["plants"])


def get_plant(name: str, path=None) -> PlantSpec:
    cat = load_catalog(path)
    if name not in cat:
        raise UnknownPlantError(f"unknown plant {name!r}; catalog has: {', '.join(sorted(cat))}")
    return cat[name]


# ------------------------------------------------------------------ excitation

MISO_SUBSETS = ((0,), (1,), (2,), (0, 1), (1, 2), (0, 2), (0, 1, 2))


@dataclass(frozen=True)
class ExcitationProgram:
    """Piecewise-constant pressure program (kPa gauge).

    * ``step_cycles``: ``cycles`` on/off pulses at ``levels[0]``; with
      ``channels > 1`` every subset in ``subsets`` is pulsed in turn.
    * ``gradual_increase``: staircase through ``levels`` with ``hold_s``
      holds, back up again, then ``off_s`` at rest.
    * ``mixed_parallel``: two channels switched at the given on/off times
      through their own level lists.
    """

    pattern: str = "step_cycles"
    levels: tuple = (-20.0,)
    on_s: float = 10.0
    off_s: float = 10.0
    cycles: int = 3
    hold_s: float = 10.0
    channels: int = 1
    subsets: tuple | None = None
    # mixed_parallel: per channel ((on times), (off times), (levels))
    timings: tuple = (
        ((5.0, 25.0, 45.0), (15.0, 35.0, 55.0), (-10.0, -20.0, -30.0)),
        ((5.0, 45.0), (35.0, 65.0), (-40.0, -60.0)),
    )
    duration_s: float = 75.0

    def __post_init__(self):
        if self.pattern not in ("step_cycles", "gradual_increase", "mixed_parallel"):
            raise ValueError(f"unknown excitation pattern {self.pattern!r}")
        if self.cycles < 1:
            raise ValueError("cycles must be >= 1")
        if not (self.on_s > 0 and self.off_s > 0 and self.hold_s > 0 and self.duration_s > 0):
            raise ValueError("durations must be > 0")
        if self.channels < 1:
            raise ValueError("channels must be >= 1")
        if not self.levels:
            raise ValueError("at least one pressure level is required")
        object.__setattr__(self, "levels", tuple(float(v) for v in self.levels))

    @classmethod
    def steps(cls, level, channels=1, **kw):
        if channels > 1:
            kw.setdefault("cycles", 1)
        return cls("step_cycles", (level,), channels=channels, **kw)

    @classmethod
    def gradual(cls, levels=(-10.0, -20.0, -40.0, -60.0), **kw):
        return cls("gradual_increase", tuple(levels), **kw)

    @classmethod
    def mixed(cls, channels=3, **kw):
        return cls("mixed_parallel", (-60.0,), channels=channels, **kw)


def _samples(seconds, dt):
    n = int(round(seconds / dt))
    if n < 1:
        raise ValueError(f"duration {seconds} s is shorter than one sample at dt={dt}")
    return n


def generate_excitation(program: ExcitationProgram, dt: float) -> np.ndarray:
    """Pressure samples: shape (N,) for one channel, (N, channels) otherwise."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    m = program.channels
    n_on, n_off = _samples(program.on_s, dt), _samples(program.off_s, dt)
    if program.pattern == "step_cycles":
        subsets = program.subsets or (MISO_SUBSETS if m == 3 else tuple((c,) for c in range(m)))
        if m == 1:
            subsets = ((0,),)
        blocks = []
        for subset in subsets:
            on = np.zeros((n_on, m))
            on[:, list(subset)] = program.levels[0]
            for _ in range(program.cycles):
                blocks += [on, np.zeros((n_off, m))]
        p = np.vstack(blocks)
    elif program.pattern == "gradual_increase":
        n_hold = _samples(program.hold_s, dt)
        down = list(program.levels)
        seq = down + down[-2::-1]
        p = np.concatenate([np.full(n_hold, v) for v in seq] + [np.zeros(n_off)])
        p = np.repeat(p[:, None], m, axis=1)
    else:
        if m < len(program.timings):
            raise ValueError("mixed_parallel needs one channel per timing entry")
        n = _samples(program.duration_s, dt)
        p = np.zeros((n, m))
        for c, (ons, offs, levels) in enumerate(program.timings):
            for t_on, t_off, lvl in zip(ons, offs, levels):
                p[int(round(t_on / dt)):int(round(t_off / dt)), c] = lvl
    return p[:, 0] if m == 1 else p


# ------------------------------------------------------------------ simulation

def simulate_plant(spec: PlantSpec, pressure, dt: float = 0.1, seed: int | None = None, name: str = "sim",
                   role=Role.IDENTIFICATION, metadata=None) -> TimeSeriesDataset:
    """Dataset with dR (%) inputs and deformation outputs for a pressure trace.

    Gaussian output noise has SD ``spec.noise`` times the noise-free output
    range (per channel), drawn from ``numpy.random.default_rng(seed)``.
    """
    p = np.asarray(pressure, dtype=float)
    p = p.reshape(len(p), -1)
    if p.shape[1] != spec.n_inputs:
        raise ShapeError(f"{spec.name} takes {spec.n_inputs} pressure channel(s), got {p.shape[1]}")
    dr = spec.sensing.resistance_change(p, dt)
    y = spec.deformation(dr / 100.0, dt)
    if spec.noise > 0:
        rng = np.random.default_rng(spec.seed if seed is None else seed)
        span = y.max(axis=0) - y.min(axis=0)
        y = y + rng.standard_normal(y.shape) * (spec.noise * span)
    meta = {"plant": spec.name, "noise": spec.noise, "seed": spec.seed if seed is None else seed}
    meta.update(metadata or {})
    return TimeSeriesDataset(name, dt, dr, y, role, spec.input_names, spec.output_names, False, meta)


def _split_programs(spec: PlantSpec):
    if spec.kind is PlantKind.MISO3:
        ident = [("step-10", ExcitationProgram.steps(-10, 3)), ("step-60", ExcitationProgram.steps(-60, 3))]
        val = [("step-20", ExcitationProgram.steps(-20, 3)), ("step-40", ExcitationProgram.steps(-40, 3))]
    else:
        ident = [("gradual", ExcitationProgram.gradual()), ("step-10", ExcitationProgram.steps(-10)),
                 ("step-60", ExcitationProgram.steps(-60))]
        val = [("step-20", ExcitationProgram.steps(-20)), ("step-40", ExcitationProgram.steps(-40))]
    return ident, val


def standard_datasets(spec: PlantSpec, seed: int = 0, dt: float = 0.1, noise: float | None = None):
    """Identification and validation datasets of the usual protocol.

    Single-input plants: gradual staircase and the -10/-60 kPa steps
    identify, the -20/-40 kPa steps validate.  Miso3 plants: -10/-60 kPa
    identify, -20/-40 kPa validate, each pulsing every contractor subset.
    Each dataset draws its noise from ``SeedSequence([seed, index])``.
    """
    if noise is not None:
        spec = PlantSpec(**{**spec.__dict__, "noise": noise})
    ident_p, val_p = _split_programs(spec)
    out = ([], [])
    for idx, (label, prog) in enumerate(ident_p + val_p):
        role = Role.IDENTIFICATION if idx < len(ident_p) else Role.VALIDATION
        rng_seed = np.random.SeedSequence([int(seed), idx]).generate_state(1)[0]
        ds = simulate_plant(spec, generate_excitation(prog, dt), dt, int(rng_seed), label, role,
                            {"program": prog.pattern, "level_kpa": prog.levels[0], "seed": int(seed)})
        out[0 if role is Role.IDENTIFICATION else 1].append(ds)
    return out


# ------------------------------------------------------------------ hysteresis

@dataclass(frozen=True)
class HysteresisLoop:
    """Loop between loading (input falling) and unloading branch fits.

    ``area`` is in input x output units; ``normalized_area`` divides it by
    the product of the input and output ranges of the dataset.
    """

    area: float
    normalized_area: float
    loading: Polynomial
    unloading: Polynomial
    x_range: tuple


def hysteresis_loop(dataset: TimeSeriesDataset, input_channel: int = 0, output_channel: int = 0,
                    order: int = 3, rest_tol: float = 1e-4) -> HysteresisLoop:
    """Branch polynomials and enclosed area of the input/output loop.

    Samples are split by the sign of the input increment; increments smaller
    than ``rest_tol`` times the input range (holds) are ignored.
    """
    if order not in (2, 3):
        raise ValueError("branch polynomial order must be 2 or 3")
    x = dataset.inputs[:, input_channel]
    y = dataset.outputs[:, output_channel]
    span_x = float(np.ptp(x))
    span_y = float(np.ptp(y))
    if span_x == 0.0:
        raise NoCycleError("input never changes; no load/unload cycle")
    dx = np.diff(x)
    moving = np.abs(dx) > rest_tol * span_x
    down = np.flatnonzero(moving & (dx < 0)) + 1
    up = np.flatnonzero(moving & (dx > 0)) + 1
    if down.size <= order or up.size <= order:
        raise NoCycleError("input does not change direction; need a full load/unload cycle")
    p_load = Polynomial.fit(x[down], y[down], order)
    p_unload = Polynomial.fit(x[up], y[up], order)
    lo = max(x[down].min(), x[up].min())
    hi = min(x[down].max(), x[up].max())
    if not hi > lo:
        raise NoCycleError("loading and unloading branches do not overlap")
    grid = np.linspace(lo, hi, 2001)
    area = float(np.trapezoid(np.abs(p_load(grid) - p_unload(grid)), grid))
    norm = area / (span_x * span_y) if span_y > 0 else 0.0
    return HysteresisLoop(area, norm, p_load, p_unload, (float(lo), float(hi)))
