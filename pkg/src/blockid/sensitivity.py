"""Flat parameter vectors for block models and their simulation Jacobians.

Parameter order in ``theta``:

* each front channel ``c``: ``b_0..b_{nb-1}`` then ``a_1..a_na``
* the nonlinearity: ``B`` breakpoints then ``B`` values
* the back block: ``b_0..b_{nb-1}`` then ``a_1..a_na``

Derivatives of the linear blocks come from the usual forward-sensitivity
filters (``d y / d b_i = q^-i u / A``, ``d y / d a_j = -q^-j y / A``); the
piecewise-linear map is differentiated exactly on each segment, including
with respect to the breakpoint positions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .blockmodel import BlockModel, Kind, PiecewiseLinearMap, _segments
from .lti import TransferFunction, _denominator_stable


@dataclass(frozen=True)
class Layout:
    kind: Kind
    n_inputs: int = 1
    front: tuple | None = None  # (na, nb) shared by every channel
    back: tuple | None = None  # (na, nb)
    n_breakpoints: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind.parse(self.kind))

    @property
    def front_size(self) -> int:
        return 0 if self.front is None else self.n_inputs * (self.front[0] + self.front[1])

    @property
    def g_size(self) -> int:
        return 2 * self.n_breakpoints

    @property
    def back_size(self) -> int:
        return 0 if self.back is None else self.back[0] + self.back[1]

    @property
    def size(self) -> int:
        return self.front_size + self.g_size + self.back_size

    def split(self, theta):
        """-> (list of (b, a) per channel or None, breakpoints, values, (b, a) or None)."""
        theta = np.asarray(theta, dtype=float)
        pos = 0
        chans = None
        if self.front is not None:
            na, nb = self.front
            chans = []
            for _ in range(self.n_inputs):
                b = theta[pos:pos + nb]
                a = np.concatenate([[1.0], theta[pos + nb:pos + nb + na]])
                chans.append((b, a))
                pos += na + nb
        bp = vals = None
        if self.n_breakpoints:
            B = self.n_breakpoints
            bp = theta[pos:pos + B]
            vals = theta[pos + B:pos + 2 * B]
            pos += 2 * B
        back = None
        if self.back is not None:
            na, nb = self.back
            back = (theta[pos:pos + nb], np.concatenate([[1.0], theta[pos + nb:pos + nb + na]]))
        return chans, bp, vals, back

    def to_model(self, theta) -> BlockModel:
        chans, bp, vals, back = self.split(theta)
        return BlockModel(
            self.kind,
            self.n_inputs,
            None if chans is None else tuple(TransferFunction(b, a) for b, a in chans),
            None if bp is None else PiecewiseLinearMap(bp, vals),
            None if back is None else TransferFunction(*back),
        )


def layout_of(model: BlockModel) -> Layout:
    """Layout matching an existing model (all front channels must share orders)."""
    front = back = None
    if model.channels is not None:
        orders = {(tf.n_poles, len(tf.numerator)) for tf in model.channels}
        if len(orders) != 1:
            raise ValueError("front channels have different orders")
        front = orders.pop()
        if any(tf.input_delay for tf in model.channels):
            raise ValueError("input delays are not parametrized")
    if model.back is not None:
        back = (model.back.n_poles, len(model.back.numerator))
        if model.back.input_delay:
            raise ValueError("input delays are not parametrized")
    B = model.nonlinearity.n_breakpoints if model.nonlinearity is not None else 0
    return Layout(model.kind, model.input_channels, front, back, B)


def pack(model: BlockModel) -> np.ndarray:
    parts = []
    for tf in model.channels or ():
        parts += [tf.numerator, tf.denominator[1:]]
    if model.nonlinearity is not None:
        parts += [model.nonlinearity.breakpoints, model.nonlinearity.values]
    if model.back is not None:
        parts += [model.back.numerator, model.back.denominator[1:]]
    return np.concatenate([np.asarray(p, dtype=float) for p in parts]) if parts else np.zeros(0)


def _lagged(v: np.ndarray, n: int) -> np.ndarray:
    """Columns v(t), v(t-1), ..., v(t-n+1) with zeros before t = 0."""
    N = v.shape[0]
    out = np.zeros((N, n))
    for i in range(min(n, N)):
        out[i:, i] = v[:N - i]
    return out


def _linear_block(b, a, u, jac):
    """Output of B/A driven by u, plus [d/db, d/da] columns when ``jac``."""
    y = lfilter(b, a, u)
    if not jac:
        return y, None
    na = a.size - 1
    w = lfilter([1.0], a, u)
    cols = [_lagged(w, b.size)]
    if na:
        z = lfilter([1.0], a, y)
        cols.append(-_lagged(z, na + 1)[:, 1:])
    return y, np.hstack(cols)


def pwl_with_derivatives(bp, vals, x, jac):
    """g(x), g'(x), and d g / d [breakpoints, values] (N x 2B) when ``jac``."""
    k = _segments(bp, x)
    x0 = bp[k]
    h = bp[k + 1] - x0
    dv = vals[k + 1] - vals[k]
    t = (x - x0) / h
    g = vals[k] + t * dv
    if not jac:
        return g, None, None
    slope = dv / h
    N = x.shape[0]
    B = bp.size
    rows = np.arange(N)
    D = np.zeros((N, 2 * B))
    D[rows, k] = dv * (t - 1.0) / h
    D[rows, k + 1] = -dv * t / h
    D[rows, B + k] = 1.0 - t
    D[rows, B + k + 1] = t
    return g, slope, D


class Simulator:
    """Simulates a :class:`Layout` on fixed data and differentiates it.

    ``inputs`` is a list of N_i x m arrays (one per dataset).  Calling the
    simulator returns the concatenated prediction (and Jacobian) or ``None``
    when ``theta`` is inadmissible: an unstable denominator, breakpoints
    closer than ``min_gap`` or out of order, or a non-finite result.
    """

    def __init__(self, layout: Layout, inputs, min_gap: float = 0.0):
        self.layout = layout
        self.inputs = [np.asarray(u, dtype=float).reshape(len(u), -1) for u in inputs]
        for u in self.inputs:
            if u.shape[1] != layout.n_inputs:
                raise ValueError("input channel count does not match the layout")
        self.min_gap = float(min_gap)

    def admissible(self, theta) -> bool:
        chans, bp, vals, back = self.layout.split(theta)
        if not np.all(np.isfinite(theta)):
            return False
        for _, a in chans or ():
            if not _denominator_stable(a):
                return False
        if back is not None and not _denominator_stable(back[1]):
            return False
        if bp is not None and not np.all(np.diff(bp) > self.min_gap):
            return False
        return True

    def __call__(self, theta, jac: bool = False):
        theta = np.asarray(theta, dtype=float)
        if not self.admissible(theta):
            return None
        outs, jacs = [], []
        for u in self.inputs:
            y, J = self._one(theta, u, jac)
            outs.append(y)
            jacs.append(J)
        y = np.concatenate(outs)
        if not np.all(np.isfinite(y)):
            return None
        if not jac:
            return y, None
        J = np.vstack(jacs)
        if not np.all(np.isfinite(J)):
            return None
        return y, J

    def _one(self, theta, u, jac):
        lay = self.layout
        chans, bp, vals, back = lay.split(theta)
        N = u.shape[0]
        blocks = []
        if chans is None:
            x = u.sum(axis=1)
        else:
            x = np.zeros(N)
            for c, (b, a) in enumerate(chans):
                xc, Jc = _linear_block(b, a, u[:, c], jac)
                x = x + xc
                blocks.append(Jc)
        Jfront = np.hstack(blocks) if (jac and blocks) else None
        if bp is None:
            return x, Jfront
        w, slope, Dg = pwl_with_derivatives(bp, vals, x, jac)
        pre = None
        if jac:
            pre = [Dg] if Jfront is None else [slope[:, None] * Jfront, Dg]
            pre = np.hstack(pre)
        if back is None:
            return w, pre
        b2, a2 = back
        y, Jb = _linear_block(b2, a2, w, jac)
        if not jac:
            return y, None
        Jpre = lfilter(b2, a2, pre, axis=0)
        return y, np.hstack([Jpre, Jb])
