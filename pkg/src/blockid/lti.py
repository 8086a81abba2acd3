"""Discrete-time rational transfer functions in the backward-shift operator.

A :class:`TransferFunction` represents

    y(t) = sum_i b_i u(t - i - d) - sum_j a_j y(t - j)

with ``numerator = (b_0, ..., b_nb-1)``, ``denominator = (1, a_1, ..., a_na)``
and ``input_delay = d``.  Initial conditions are always zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .errors import InvalidModelError, UndefinedGainError

__all__ = [
    "TransferFunction",
    "simulate_tf",
    "is_stable",
    "dc_gain",
    "identity",
    "series",
    "stabilize_denominator",
    "minreal",
]

STABILITY_MARGIN = 1e-9


@dataclass(frozen=True)
class TransferFunction:
    numerator: tuple
    denominator: tuple = (1.0,)
    input_delay: int = 0

    def __post_init__(self):
        b = tuple(float(x) for x in np.ravel(self.numerator))
        a = tuple(float(x) for x in np.ravel(self.denominator))
        if not b:
            raise InvalidModelError("numerator needs at least one coefficient")
        if not a or a[0] != 1.0:
            raise InvalidModelError(f"denominator must be monic (leading coefficient exactly 1), got {a[:1]}")
        if not all(np.isfinite(b)) or not all(np.isfinite(a)):
            raise InvalidModelError("transfer function coefficients must be finite")
        d = int(self.input_delay)
        if d != self.input_delay or d < 0:
            raise InvalidModelError(f"input_delay must be a non-negative integer, got {self.input_delay!r}")
        object.__setattr__(self, "numerator", b)
        object.__setattr__(self, "denominator", a)
        object.__setattr__(self, "input_delay", d)

    @property
    def n_poles(self) -> int:
        return len(self.denominator) - 1

    @property
    def n_zeros(self) -> int:
        return len(self.numerator) - 1

    @property
    def n_params(self) -> int:
        return len(self.numerator) + len(self.denominator) - 1

    def poles(self) -> np.ndarray:
        if self.n_poles == 0:
            return np.zeros(0, dtype=complex)
        return np.roots(self.denominator)

    def scaled(self, k: float) -> "TransferFunction":
        return TransferFunction(tuple(k * b for b in self.numerator), self.denominator, self.input_delay)


def identity() -> TransferFunction:
    return TransferFunction((1.0,), (1.0,))


def simulate_tf(tf: TransferFunction, u) -> np.ndarray:
    """Zero-state response of ``tf`` to the sequence ``u``."""
    u = np.asarray(u, dtype=float)
    if u.size == 0:
        return np.zeros(0)
    b = np.asarray(tf.numerator)
    a = np.asarray(tf.denominator)
    if not (np.all(np.isfinite(b)) and np.all(np.isfinite(a))):
        raise InvalidModelError("transfer function coefficients must be finite")
    if tf.input_delay:
        b = np.concatenate([np.zeros(tf.input_delay), b])
    return lfilter(b, a, u)


def _denominator_stable(a) -> bool:
    a = np.asarray(a, dtype=float)
    if a.size <= 1:
        return True
    if a.size == 2:
        return abs(a[1]) < 1.0 - STABILITY_MARGIN
    return bool(np.all(np.abs(np.roots(a)) < 1.0 - STABILITY_MARGIN))


def is_stable(tf: TransferFunction) -> bool:
    """True iff every pole lies strictly inside the unit circle."""
    return bool(_denominator_stable(tf.denominator))


def dc_gain(tf: TransferFunction) -> float:
    den = float(np.sum(tf.denominator))
    if abs(den) <= 1e-15 * float(np.sum(np.abs(tf.denominator))):
        raise UndefinedGainError("denominator vanishes at z = 1; DC gain is undefined")
    return float(np.sum(tf.numerator)) / den


def series(first: TransferFunction, second: TransferFunction) -> TransferFunction:
    """Cascade ``first`` followed by ``second``."""
    return TransferFunction(
        np.convolve(first.numerator, second.numerator),
        np.convolve(first.denominator, second.denominator),
        first.input_delay + second.input_delay,
    )


def stabilize_denominator(a, radius: float = 0.98) -> np.ndarray:
    """Mirror unstable poles into the unit disk, clipping any left outside ``radius``.

    Stable denominators are returned unchanged (as a copy).
    """
    a = np.asarray(a, dtype=float)
    if a.size <= 1 or _denominator_stable(a):
        return a.copy()
    p = np.roots(a)
    mag = np.abs(p)
    out = mag >= 1.0
    p = np.where(out, 1.0 / np.conj(np.where(mag == 0, 1, p)), p)
    mag = np.abs(p)
    p = np.where(mag > radius, p * (radius / np.maximum(mag, 1e-300)), p)
    new = np.real(np.poly(p))
    new[0] = 1.0
    return new


def _pairs(poles, zeros, tol):
    """Indices of (pole, zero) pairs closer than ``tol``, conjugates together."""
    used_z = set()
    out = []
    for i, p in enumerate(poles):
        if p.imag < -1e-12:
            continue
        best, dist = None, tol
        for j, z in enumerate(zeros):
            if j in used_z or (abs(p.imag) > 1e-12) != (abs(z.imag) > 1e-12) or z.imag < -1e-12:
                continue
            d = abs(p - z)
            if d < dist:
                best, dist = j, d
        if best is None:
            continue
        used_z.add(best)
        out.append((i, best))
        if abs(p.imag) > 1e-12:
            ic = int(np.argmin(np.abs(poles - np.conj(p))))
            jc = int(np.argmin(np.abs(zeros - np.conj(zeros[best]))))
            used_z.add(jc)
            out.append((ic, jc))
    return out


def minreal(tf: TransferFunction, tol: float = 1e-2) -> TransferFunction:
    """Remove pole/zero pairs closer than ``tol``; the DC gain is preserved when defined."""
    b = np.asarray(tf.numerator, dtype=float)
    nz = np.flatnonzero(b)
    if nz.size == 0 or tf.n_poles == 0:
        return tf
    lead = nz[0]
    core = b[lead:]
    poles = np.roots(tf.denominator)
    zeros = np.roots(core)
    pairs = _pairs(poles, zeros, tol)
    if not pairs:
        return tf
    drop_p = {i for i, _ in pairs}
    drop_z = {j for _, j in pairs}
    keep_p = np.array([p for i, p in enumerate(poles) if i not in drop_p])
    keep_z = np.array([z for j, z in enumerate(zeros) if j not in drop_z])
    a = np.real(np.poly(keep_p)) if keep_p.size else np.ones(1)
    nb = core[0] * (np.real(np.poly(keep_z)) if keep_z.size else np.ones(1))
    new = TransferFunction(np.concatenate([np.zeros(lead), nb]), a, tf.input_delay)
    try:
        k_old, k_new = dc_gain(tf), dc_gain(new)
        if abs(k_new) > 1e-12:
            new = new.scaled(k_old / k_new)
    except InvalidModelError:
        pass
    return new
