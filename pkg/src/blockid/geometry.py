"""Deformation from tracked marker coordinates, plus printing design helpers.

Curvature comes from an algebraic (Kasa) circle fit through the markers of
one frame; contraction strain from a single marker's travel along gravity.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .datasets import TimeSeriesDataset
from .errors import CalibrationRangeError, DatasetParseError, DomainError, InsufficientDataError, NegativePorosityError, ShapeError

__all__ = [
    "MarkerFrame",
    "CircleFit",
    "DesignSample",
    "fit_circle_curvature",
    "contraction_strain",
    "porosity_from_mass",
    "coiling_radius",
    "load_markers",
    "frames_to_dataset",
    "COILING_RANGE",
]

# nozzle heights (mm) covered by the coiling-radius calibration line
COILING_RANGE = (2.5, 10.0)
COLLINEAR_TOL = 1e-12


@dataclass(frozen=True)
class MarkerFrame:
    timestamp: float
    points: np.ndarray  # k x 2, mm

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, copy=True).reshape(-1, 2)
        if pts.shape[0] < 1:
            raise ShapeError("a marker frame needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise ShapeError("marker coordinates must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "timestamp", float(self.timestamp))


@dataclass(frozen=True)
class CircleFit:
    curvature: float  # 1/mm, 0 for collinear markers
    radius: float  # mm, inf for collinear markers
    center: tuple = (math.nan, math.nan)


def fit_circle_curvature(frame, direction=None) -> CircleFit:
    """Least-squares circle through the frame's points.

    Minimizes the algebraic residual ``x^2 + y^2 + D x + E y + F`` on
    centered, scaled coordinates.  Nearly collinear points give
    ``curvature = 0``.  With ``direction`` (a 2-vector) the curvature is
    positive when the circle center lies on that side of the markers and
    negative otherwise.
    """
    pts = frame.points if isinstance(frame, MarkerFrame) else MarkerFrame(0.0, frame).points
    if pts.shape[0] < 3:
        raise InsufficientDataError(f"circle fit needs at least 3 points, got {pts.shape[0]}")
    mean = pts.mean(axis=0)
    scale = float(np.max(np.abs(pts - mean)))
    if scale == 0.0:
        raise InsufficientDataError("all markers coincide")
    p = (pts - mean) / scale
    A = np.column_stack([p, np.ones(len(p))])
    M = A.T @ A
    ev = np.linalg.eigvalsh(M)
    if ev[0] < COLLINEAR_TOL * ev[-1]:
        return CircleFit(0.0, math.inf)
    rhs = -(p ** 2).sum(axis=1)
    D, E, F = np.linalg.solve(M, A.T @ rhs)
    c = np.array([-D / 2.0, -E / 2.0])
    r2 = float(c @ c - F)
    if not r2 > 0:
        return CircleFit(0.0, math.inf)
    r = math.sqrt(r2) * scale
    center = c * scale + mean
    kappa = 1.0 / r
    if direction is not None:
        side = float(np.dot(center - mean, np.asarray(direction, dtype=float)))
        kappa = kappa if side >= 0 else -kappa
    return CircleFit(kappa, r, (float(center[0]), float(center[1])))


def contraction_strain(rest_position, current_position, rest_length: float, gravity=(0.0, -1.0)) -> float:
    """Compression in % of ``rest_length`` from a marker's travel against gravity.

    Positions are (x, y) in mm, or scalars read as heights (upward axis).
    """
    if not rest_length > 0:
        raise DomainError(f"rest_length must be > 0, got {rest_length}")
    g = np.asarray(gravity, dtype=float)
    g = g / np.linalg.norm(g)

    def along(pos):
        pos = np.asarray(pos, dtype=float)
        if pos.ndim == 0:
            pos = np.array([0.0, float(pos)])
        return float(pos @ g)

    return 100.0 * (along(rest_position) - along(current_position)) / rest_length


@dataclass(frozen=True)
class DesignSample:
    """A printed sample: mass (g), volume (cm^3) and bulk density (g/cm^3)."""

    mass: float
    volume: float
    bulk_density: float = 0.97
    metadata: dict = field(default_factory=dict)  # e.g. nozzle height, coiling density

    def __post_init__(self):
        for name in ("mass", "volume", "bulk_density"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be finite and > 0, got {v}")


def porosity_from_mass(sample: DesignSample) -> int:
    """Void fraction ``100 (1 - m / (V rho_b))`` rounded half-up to a whole percent."""
    solid = sample.volume * sample.bulk_density
    if sample.mass > solid:
        raise NegativePorosityError(f"mass {sample.mass} g exceeds the solid mass {solid} g of the volume")
    phi = 100.0 * (1.0 - sample.mass / solid)
    # tiny representation error must not flip a .5 case
    return int(math.floor(round(phi, 9) + 0.5))


def coiling_radius(height: float) -> float:
    """Coiling radius (mm) from nozzle height (mm) on the calibrated line."""
    lo, hi = COILING_RANGE
    if not lo <= height <= hi:
        raise CalibrationRangeError(f"nozzle height {height} mm outside the calibrated range [{lo}, {hi}] mm")
    return 0.40 * height - 0.3


def load_markers(path) -> list:
    """Read a ``t,x1,y1[,x2,y2,...]`` CSV (optional header row) into frames."""
    path = Path(path)
    frames = []
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                vals = [float(v) for v in row]
            except ValueError:
                if not frames and lineno == 1:
                    continue  # header
                raise DatasetParseError(f"{path}: non-numeric value", row=len(frames) + 1, line=lineno) from None
            if len(vals) < 3 or (len(vals) - 1) % 2:
                raise DatasetParseError(f"{path}: expected t followed by x,y pairs", row=len(frames) + 1, line=lineno)
            if not all(math.isfinite(v) for v in vals):
                raise DatasetParseError(f"{path}: non-finite value", row=len(frames) + 1, line=lineno)
            frames.append(MarkerFrame(vals[0], np.reshape(vals[1:], (-1, 2))))
    if len(frames) < 2:
        raise DatasetParseError(f"{path}: need at least 2 frames")
    return frames


def frames_to_dataset(frames: Sequence[MarkerFrame], mode: str, name: str = "markers",
                      rest_length: float | None = None, direction=None, gravity=(0.0, -1.0)) -> TimeSeriesDataset:
    """One-output dataset (no inputs) of curvature or contraction strain per frame.

    Frames must be uniformly spaced in time.  In ``strain`` mode the first
    marker of the first frame is the rest position.
    """
    t = np.array([f.timestamp for f in frames])
    dts = np.diff(t)
    if dts.size == 0 or not np.all(dts > 0):
        raise ShapeError("frame timestamps must be strictly increasing")
    dt = float(np.mean(dts))
    if np.max(np.abs(dts - dt)) > 1e-6 * dt:
        raise ShapeError("frames are not uniformly sampled")
    if mode == "curvature":
        y = [fit_circle_curvature(f, direction).curvature for f in frames]
        col = "curvature[1/mm]"
    elif mode == "strain":
        if rest_length is None:
            raise DomainError("strain mode needs rest_length")
        rest = frames[0].points[0]
        y = [contraction_strain(rest, f.points[0], rest_length, gravity) for f in frames]
        col = "strain[%]"
    else:
        raise ValueError(f"unknown geometry mode {mode!r} (use 'curvature' or 'strain')")
    return TimeSeriesDataset(name, dt, np.zeros((len(frames), 0)), np.asarray(y)[:, None], output_names=(col,),
                             metadata={"source": "markers", "mode": mode})
