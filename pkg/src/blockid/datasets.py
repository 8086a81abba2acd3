"""Time-series datasets, resistance-change preprocessing and CSV I/O.

Dataset files are UTF-8 CSV with a one-line key/value header::

    # blockid-dataset v1; dt=0.1; role=identification; inputs=1; outputs=1
    dR[%],curvature[1/mm]
    0,0
    -1.25,0.0031
    ...

Input columns come first, then output columns.  A unit may be attached to a
column name in square brackets.  Floats are written with 17 significant
digits so a save/load round trip is bit-exact.
"""
from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DatasetParseError, InvalidTraceError, NormalizationError, ShapeError

SCHEMA = "blockid-dataset v1"

__all__ = [
    "Role",
    "TimeSeriesDataset",
    "ResistanceTrace",
    "compute_resistance_change",
    "normalize_inputs",
    "load_dataset",
    "save_dataset",
]


class Role(str, Enum):
    IDENTIFICATION = "identification"
    VALIDATION = "validation"


def _frozen_matrix(a, name) -> np.ndarray:
    arr = np.array(a, dtype=float, copy=True)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be a 2-D (samples x channels) array, got ndim={arr.ndim}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TimeSeriesDataset:
    """Uniformly sampled input/output record.

    ``inputs`` is N x m, ``outputs`` is N x p.  Arrays are copied and made
    read-only on construction so a dataset can be shared between workers.
    """

    name: str
    sample_period: float
    inputs: np.ndarray
    outputs: np.ndarray
    role: Role = Role.IDENTIFICATION
    input_names: tuple = ()
    output_names: tuple = ()
    normalized: bool = False
    metadata: Mapping = field(default_factory=dict)

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "role", Role(self.role))
        dt = float(self.sample_period)
        if not (math.isfinite(dt) and dt > 0):
            raise ShapeError(f"sample_period must be finite and > 0, got {self.sample_period!r}")
        set_(self, "sample_period", dt)
        u = _frozen_matrix(self.inputs, "inputs")
        y = _frozen_matrix(self.outputs, "outputs")
        if u.shape[0] != y.shape[0]:
            raise ShapeError(f"inputs have {u.shape[0]} samples but outputs have {y.shape[0]}")
        if u.shape[0] < 2:
            raise ShapeError("a dataset needs at least 2 samples")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(y))):
            raise ShapeError("dataset contains non-finite values")
        set_(self, "inputs", u)
        set_(self, "outputs", y)
        in_names = tuple(self.input_names) or tuple(f"u{i + 1}" for i in range(u.shape[1]))
        out_names = tuple(self.output_names) or tuple(f"y{i + 1}" for i in range(y.shape[1]))
        if len(in_names) != u.shape[1] or len(out_names) != y.shape[1]:
            raise ShapeError("channel name count does not match channel count")
        set_(self, "input_names", in_names)
        set_(self, "output_names", out_names)
        set_(self, "metadata", dict(self.metadata))

    @property
    def n_samples(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.inputs.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.outputs.shape[1]

    @property
    def output_units(self) -> tuple:
        return tuple(_split_unit(n)[1] for n in self.output_names)

    def replace(self, **changes) -> "TimeSeriesDataset":
        return dataclasses.replace(self, **changes)

    def __eq__(self, other):
        if not isinstance(other, TimeSeriesDataset):
            return NotImplemented
        return (
            self.name == other.name
            and self.sample_period == other.sample_period
            and self.role == other.role
            and self.input_names == other.input_names
            and self.output_names == other.output_names
            and self.normalized == other.normalized
            and np.array_equal(self.inputs, other.inputs)
            and np.array_equal(self.outputs, other.outputs)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class ResistanceTrace:
    """Raw resistance samples in ohm.  ``r0`` defaults to the first sample."""

    samples: np.ndarray
    r0: float | None = None

    def __post_init__(self):
        s = np.array(self.samples, dtype=float, copy=True).ravel()
        if s.size == 0:
            raise InvalidTraceError("resistance trace is empty")
        if not np.all(np.isfinite(s)) or np.any(s <= 0):
            raise InvalidTraceError("resistance samples must be finite and > 0")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        r0 = float(s[0]) if self.r0 is None else float(self.r0)
        if not (math.isfinite(r0) and r0 > 0):
            raise InvalidTraceError(f"initial resistance r0 must be > 0, got {self.r0!r}")
        object.__setattr__(self, "r0", r0)


def compute_resistance_change(trace: ResistanceTrace) -> np.ndarray:
    """Relative resistance change in percent, 100 (R - R0) / R0."""
    if trace.r0 is None or not trace.r0 > 0:
        raise InvalidTraceError("r0 must be > 0")
    return 100.0 * (trace.samples - trace.r0) / trace.r0


def normalize_inputs(dataset: TimeSeriesDataset) -> TimeSeriesDataset:
    """Convert percent inputs to fractions.  Refuses to divide twice."""
    if dataset.normalized:
        raise NormalizationError(f"dataset {dataset.name!r} is already normalized")
    return dataset.replace(inputs=dataset.inputs / 100.0, normalized=True)


# --------------------------------------------------------------------------- I/O

_UNIT_RE = re.compile(r"^(.*?)\s*\[(.*)\]\s*$")


def _split_unit(name: str):
    m = _UNIT_RE.match(name)
    if m:
        return m.group(1), m.group(2)
    return name, ""


def _fmt(x: float) -> str:
    return "%.17g" % x


def _format_header(ds: TimeSeriesDataset) -> str:
    fields = [
        SCHEMA,
        f"dt={float(ds.sample_period)!r}",
        f"role={ds.role.value}",
        f"inputs={ds.n_inputs}",
        f"outputs={ds.n_outputs}",
        f"normalized={int(ds.normalized)}",
    ]
    for key in sorted(ds.metadata):
        val = str(ds.metadata[key])
        if any(c in val for c in ";=\n"):
            raise ShapeError(f"metadata value for {key!r} cannot contain ';', '=' or newlines")
        fields.append(f"{key}={val}")
    return "# " + "; ".join(fields)


def save_dataset(dataset: TimeSeriesDataset, path) -> None:
    names = list(dataset.input_names) + list(dataset.output_names)
    for n in names:
        if "," in n or "\n" in n:
            raise ShapeError(f"column name {n!r} contains a comma or newline")
    data = np.hstack([dataset.inputs, dataset.outputs])
    lines = [_format_header(dataset), ",".join(names)]
    lines.extend(",".join(_fmt(v) for v in row) for row in data)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


_REQUIRED = ("dt", "role", "inputs", "outputs")


def _parse_header(line: str):
    if not line.startswith("#"):
        raise DatasetParseError("missing '# blockid-dataset v1' header", line=1)
    parts = [p.strip() for p in line[1:].split(";")]
    if not parts or parts[0] != SCHEMA:
        raise DatasetParseError(f"unsupported schema {parts[0]!r}, expected {SCHEMA!r}", line=1)
    kv = {}
    for p in parts[1:]:
        if not p:
            continue
        if "=" not in p:
            raise DatasetParseError(f"header field {p!r} is not key=value", line=1)
        k, v = p.split("=", 1)
        kv[k.strip()] = v.strip()
    missing = [k for k in _REQUIRED if k not in kv]
    if missing:
        raise DatasetParseError(f"header lacks required field(s) {', '.join(missing)}", line=1)
    try:
        dt = float(kv.pop("dt"))
        m = int(kv.pop("inputs"))
        p = int(kv.pop("outputs"))
    except ValueError as exc:
        raise DatasetParseError(f"bad numeric header field: {exc}", line=1) from None
    if not (math.isfinite(dt) and dt > 0) or m < 0 or p < 0:
        raise DatasetParseError("header needs dt > 0, inputs >= 0, outputs >= 0", line=1)
    role = kv.pop("role")
    try:
        role = Role(role)
    except ValueError:
        raise DatasetParseError(f"unknown role {role!r}", line=1) from None
    normalized = kv.pop("normalized", "0") in ("1", "true", "True")
    return dt, role, m, p, normalized, kv


def load_dataset(path, name: str | None = None, role: Role | str | None = None) -> TimeSeriesDataset:
    """Parse a dataset CSV.  ``role`` overrides the role stored in the header."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines:
        raise DatasetParseError("empty file")
    dt, file_role, m, p, normalized, extra = _parse_header(lines[0])
    if len(lines) < 2 or not lines[1].strip():
        raise DatasetParseError("missing column-name line", line=2)
    names = [c.strip() for c in lines[1].split(",")]
    if len(names) != m + p:
        raise DatasetParseError(f"expected {m + p} column names, found {len(names)}", line=2)
    rows = []
    for i, raw in enumerate(lines[2:], start=1):
        lineno = i + 2
        if not raw.strip():
            continue
        cells = raw.split(",")
        if len(cells) != m + p:
            raise DatasetParseError(f"expected {m + p} values, found {len(cells)}", row=i, line=lineno)
        vals = []
        for j, c in enumerate(cells):
            try:
                v = float(c)
            except ValueError:
                raise DatasetParseError(f"cannot parse {c.strip()!r} as a number", row=i, line=lineno, column=names[j]) from None
            if not math.isfinite(v):
                raise DatasetParseError(f"non-finite value {c.strip()!r}", row=i, line=lineno, column=names[j])
            vals.append(v)
        rows.append(vals)
    if len(rows) < 2:
        raise DatasetParseError(f"need at least 2 data rows, found {len(rows)}")
    data = np.array(rows, dtype=float).reshape(len(rows), m + p)
    return TimeSeriesDataset(
        name=name if name is not None else path.stem,
        sample_period=dt,
        inputs=data[:, :m],
        outputs=data[:, m:],
        role=Role(role) if role is not None else file_role,
        input_names=tuple(names[:m]),
        output_names=tuple(names[m:]),
        normalized=normalized,
        metadata=extra,
    )


def check_compatible(datasets: Sequence[TimeSeriesDataset]) -> None:
    """All datasets must share input/output channel counts and sample period."""
    if not datasets:
        return
    first = datasets[0]
    for ds in datasets[1:]:
        if ds.n_inputs != first.n_inputs or ds.n_outputs != first.n_outputs:
            raise ShapeError(f"dataset {ds.name!r} has a different channel layout than {first.name!r}")
        if ds.sample_period != first.sample_period:
            raise ShapeError(
                f"dataset {ds.name!r} is sampled at dt={ds.sample_period} but {first.name!r} at dt={first.sample_period}; "
                "resampling is not supported"
            )
