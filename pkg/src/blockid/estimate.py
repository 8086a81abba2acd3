"""Output-error identification of Linear, Hammerstein, Wiener and WH models.

Every candidate of the pole/zero grid is fitted by Levenberg-Marquardt on the
free-run simulation error of the identification datasets; the candidate with
the highest NRMSE fit averaged over identification *and* validation datasets
is selected.  Wiener-Hammerstein models are built in two stages (Wiener then
linear, or linear then Hammerstein) and the better route is kept.
"""
from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.signal import lfilter

from . import __version__
from .blockmodel import (
    BlockModel,
    Kind,
    ModelBundle,
    PiecewiseLinearMap,
    normalize_gains,
    simulate_model,
)
from .datasets import Role, TimeSeriesDataset, check_compatible, normalize_inputs
from .errors import (
    EstimationFailedError,
    PartialResultError,
    ShapeError,
    UndefinedFitError,
    UndefinedScaleError,
)
from .lti import TransferFunction, identity, is_stable, minreal, series, stabilize_denominator
from .metrics import _mean_se, nrmse_fit, scaled_rms
from .optim import levenberg_marquardt
from .sensitivity import Layout, Simulator, _lagged, layout_of, pack

__all__ = [
    "SearchConfig",
    "EstimationProblem",
    "DatasetFit",
    "FitReport",
    "Estimate",
    "Verdict",
    "estimate",
    "estimate_linear",
    "estimate_block",
    "estimate_wh",
    "estimate_miso_bundle",
    "evaluate_model",
    "select_best",
]


@dataclass(frozen=True)
class SearchConfig:
    """Settings of the order search and of each local optimization.

    ``orders`` optionally replaces the full ``(n_poles, n_numerator_coeffs)``
    grid with an explicit list.
    """

    max_poles: int = 10
    max_zeros: int = 10
    breakpoint_count: int = 10
    max_iterations: int = 200
    restarts: int = 2
    seed: int = 0
    ftol: float = 1e-9
    ftol_window: int = 5
    gtol: float = 1e-8
    xtol: float = 1e-10
    orders: tuple | None = None

    def __post_init__(self):
        if self.max_poles < 1:
            raise ValueError("max_poles must be >= 1")
        if self.max_zeros < 0:
            raise ValueError("max_zeros must be >= 0")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.breakpoint_count < 2:
            raise ValueError("breakpoint_count must be >= 2")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if not (self.ftol > 0 and self.gtol > 0 and self.xtol > 0):
            raise ValueError("tolerances must be > 0")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.orders is not None:
            orders = tuple((int(na), int(nb)) for na, nb in self.orders)
            for na, nb in orders:
                if na < 1 or nb < 1 or nb - 1 >= na:
                    raise ValueError(f"order ({na}, {nb}) violates poles > zeros")
            object.__setattr__(self, "orders", orders)

    def order_grid(self) -> list:
        """Admissible ``(na, nb)`` pairs: 1 <= na <= max_poles, 0 <= nb-1 < na."""
        if self.orders is not None:
            return list(self.orders)
        return [(na, nb) for na in range(1, self.max_poles + 1) for nb in range(1, min(na, self.max_zeros + 1) + 1)]

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if d["orders"] is not None:
            d["orders"] = [list(o) for o in d["orders"]]
        return d


def _prepare(ds: TimeSeriesDataset, role: Role) -> TimeSeriesDataset:
    if not ds.normalized:
        ds = normalize_inputs(ds)
    if ds.role != role:
        ds = ds.replace(role=role)
    return ds


@dataclass(frozen=True)
class EstimationProblem:
    """Datasets, target output channel, model kind and search settings.

    Inputs that are still in percent are divided by 100 on construction.
    """

    identification: tuple
    validation: tuple
    kind: Kind = Kind.WIENER_HAMMERSTEIN
    output_channel: int = 0
    config: SearchConfig = field(default_factory=SearchConfig)

    def __post_init__(self):
        ident = tuple(_prepare(d, Role.IDENTIFICATION) for d in self.identification)
        val = tuple(_prepare(d, Role.VALIDATION) for d in self.validation)
        if not ident or not val:
            raise ShapeError("need at least one identification and one validation dataset")
        check_compatible(ident + val)
        if ident[0].n_inputs < 1:
            raise ShapeError("datasets have no input channels")
        if not 0 <= self.output_channel < ident[0].n_outputs:
            raise ShapeError(f"output channel {self.output_channel} out of range")
        ids = {d.name for d in ident}
        overlap = ids & {d.name for d in val}
        if overlap:
            raise ShapeError(f"datasets {sorted(overlap)} appear in both identification and validation sets")
        object.__setattr__(self, "identification", ident)
        object.__setattr__(self, "validation", val)
        object.__setattr__(self, "kind", Kind.parse(self.kind))

    @property
    def n_inputs(self) -> int:
        return self.identification[0].n_inputs

    def with_kind(self, kind) -> "EstimationProblem":
        return dataclasses.replace(self, kind=Kind.parse(kind))


@dataclass(frozen=True)
class DatasetFit:
    name: str
    role: str
    nrmse_fit: float
    scaled_rms: float
    n_samples: int


@dataclass(frozen=True)
class FitReport:
    """Per-dataset metrics of one model plus their averages.

    ``mean_fit``/``mean_rms`` average over identification and validation
    datasets; ``se_*`` are sample standard errors.  Undefined metrics (constant
    measured output) are NaN and flag the report as ``degenerate``.
    """

    kind: str
    entries: tuple
    mean_fit: float
    mean_rms: float
    se_fit: float
    se_rms: float
    identification_cost: float
    n_params: int
    orders: Mapping = field(default_factory=dict)
    verdict: str = ""

    @property
    def degenerate(self) -> bool:
        return not math.isfinite(self.mean_fit)

    def _mean(self, role, attr):
        vals = [getattr(e, attr) for e in self.entries if e.role == role]
        return float(np.mean(vals)) if vals else float("nan")

    @property
    def identification_fit(self) -> float:
        return self._mean(Role.IDENTIFICATION.value, "nrmse_fit")

    @property
    def validation_fit(self) -> float:
        return self._mean(Role.VALIDATION.value, "nrmse_fit")

    @property
    def validation_rms(self) -> float:
        return self._mean(Role.VALIDATION.value, "scaled_rms")

    def with_verdict(self, verdict: str) -> "FitReport":
        return dataclasses.replace(self, verdict=verdict)

    def to_text(self) -> str:
        """Machine-readable ``key = value`` report; metrics with two decimals."""
        lines = [
            f"kind = {self.kind}",
            f"n_params = {self.n_params}",
            f"orders = {_orders_text(self.orders)}",
            f"identification_cost = {self.identification_cost:.6e}",
        ]
        for e in self.entries:
            lines.append(f"dataset.{e.name}.role = {e.role}")
            lines.append(f"dataset.{e.name}.n_samples = {e.n_samples}")
            lines.append(f"dataset.{e.name}.nrmse_fit = {e.nrmse_fit:.2f}")
            lines.append(f"dataset.{e.name}.scaled_rms = {e.scaled_rms:.2f}")
        lines += [
            f"mean_fit = {self.mean_fit:.2f}",
            f"se_fit = {self.se_fit:.2f}",
            f"mean_rms = {self.mean_rms:.2f}",
            f"se_rms = {self.se_rms:.2f}",
            f"verdict = {self.verdict}",
        ]
        return "\n".join(lines) + "\n"


def _orders_text(orders) -> str:
    parts = []
    if "front" in orders:
        parts.append("front=" + "/".join(f"{p}p{z}z" for p, z in orders["front"]))
    if "back" in orders:
        p, z = orders["back"]
        parts.append(f"back={p}p{z}z")
    return " ".join(parts) or "-"


@dataclass(frozen=True)
class CandidateSummary:
    na: int
    nb: int
    status: str
    cost: float
    mean_fit: float
    restart_costs: tuple = ()


@dataclass(frozen=True)
class Estimate:
    """Selected model, its report and the diagnostics of the search."""

    model: BlockModel
    report: FitReport
    candidates: tuple = ()
    stages: Mapping = field(default_factory=dict)

    def __iter__(self):
        yield self.model
        yield self.report


# ------------------------------------------------------------------ data handling

@dataclass(frozen=True)
class _Split:
    id_inputs: tuple
    id_outputs: tuple
    id_names: tuple
    val_inputs: tuple
    val_outputs: tuple
    val_names: tuple

    @property
    def n_inputs(self) -> int:
        return self.id_inputs[0].shape[1]

    def with_inputs(self, id_inputs, val_inputs) -> "_Split":
        as2d = lambda seq: tuple(np.asarray(u, dtype=float).reshape(len(u), -1) for u in seq)
        return dataclasses.replace(self, id_inputs=as2d(id_inputs), val_inputs=as2d(val_inputs))


def _split_of(problem: EstimationProblem) -> _Split:
    ch = problem.output_channel
    return _Split(
        tuple(d.inputs for d in problem.identification),
        tuple(d.outputs[:, ch].copy() for d in problem.identification),
        tuple(d.name for d in problem.identification),
        tuple(d.inputs for d in problem.validation),
        tuple(d.outputs[:, ch].copy() for d in problem.validation),
        tuple(d.name for d in problem.validation),
    )


def _safe(metric, y, yhat) -> float:
    try:
        return metric(y, yhat)
    except (UndefinedFitError, UndefinedScaleError):
        return float("nan")


def _report(model: BlockModel, split: _Split, verdict: str = "") -> FitReport:
    entries = []
    cost = 0.0
    groups = (
        (Role.IDENTIFICATION.value, split.id_inputs, split.id_outputs, split.id_names),
        (Role.VALIDATION.value, split.val_inputs, split.val_outputs, split.val_names),
    )
    for role, inputs, outputs, names in groups:
        for u, y, name in zip(inputs, outputs, names):
            yhat = simulate_model(model, u)
            if role == Role.IDENTIFICATION.value:
                cost += float(np.sum((y - yhat) ** 2))
            entries.append(DatasetFit(name, role, _safe(nrmse_fit, y, yhat), _safe(scaled_rms, y, yhat), y.size))
    mf, sf = _mean_se([e.nrmse_fit for e in entries])
    mr, sr = _mean_se([e.scaled_rms for e in entries])
    return FitReport(model.kind.value, tuple(entries), mf, mr, sf, sr, cost, model.n_params, model.orders(), verdict)


def evaluate_model(model: BlockModel, datasets: Sequence[TimeSeriesDataset], output_channel: int = 0) -> FitReport:
    """Metrics of ``model`` on the given datasets (their roles are kept)."""
    datasets = [d if d.normalized else normalize_inputs(d) for d in datasets]
    ident = [d for d in datasets if d.role == Role.IDENTIFICATION]
    val = [d for d in datasets if d.role == Role.VALIDATION]
    ch = output_channel
    split = _Split(
        tuple(d.inputs for d in ident), tuple(d.outputs[:, ch] for d in ident), tuple(d.name for d in ident),
        tuple(d.inputs for d in val), tuple(d.outputs[:, ch] for d in val), tuple(d.name for d in val),
    )
    return _report(model, split, "evaluated")


def _rank_key(report: FitReport, index: int):
    if math.isfinite(report.mean_fit):
        rms = report.mean_rms if math.isfinite(report.mean_rms) else math.inf
        return (0, -round(report.mean_fit, 9), round(rms, 9), report.n_params, index)
    return (1, report.identification_cost, report.n_params, index)


# ------------------------------------------------------------------ initialization

def _arx(inputs, outputs, na: int, nb: int):
    """Equation-error least squares with a common denominator for all channels.

    Returns ``(channels, a)`` where ``channels[c]`` is the numerator of input
    ``c``.  The denominator is projected to stability and the numerators are
    refitted against the resulting output-error regressors.
    """
    m = inputs[0].shape[1]
    rows, rhs = [], []
    for u, y in zip(inputs, outputs):
        cols = []
        if na:
            cols.append(-_lagged(y, na + 1)[:, 1:])
        for c in range(m):
            cols.append(_lagged_cols(u[:, c], nb))
        rows.append(np.hstack(cols))
        rhs.append(y)
    X = np.vstack(rows)
    Y = np.concatenate(rhs)
    coef = np.linalg.lstsq(X, Y, rcond=None)[0]
    a = np.concatenate([[1.0], coef[:na]])
    if not np.all(np.isfinite(a)):
        a = np.concatenate([[1.0], np.zeros(na)])
    a = stabilize_denominator(a)
    # output-error numerator refit with the denominator held fixed
    rows = []
    for u in inputs:
        rows.append(np.hstack([_lagged_cols(lfilter([1.0], a, u[:, c]), nb) for c in range(m)]))
    coef = np.linalg.lstsq(np.vstack(rows), Y, rcond=None)[0]
    if not np.all(np.isfinite(coef)):
        coef = np.zeros(m * nb)
    chans = [coef[c * nb:(c + 1) * nb] for c in range(m)]
    return chans, a


def _lagged_cols(v, n):
    return _lagged(np.asarray(v, dtype=float), n)


def _span(values):
    lo = min(float(np.min(v)) for v in values)
    hi = max(float(np.max(v)) for v in values)
    if not hi - lo > 1e-12 * max(1.0, abs(lo), abs(hi)):
        mid = 0.5 * (lo + hi)
        lo, hi = mid - 1.0, mid + 1.0
    return lo, hi


def _initial_theta(layout: Layout, split: _Split):
    """Starting point and minimum breakpoint gap for ``layout``."""
    B = layout.n_breakpoints
    ins, outs = split.id_inputs, split.id_outputs
    if layout.kind is Kind.LINEAR or layout.kind is Kind.WIENER:
        na, nb = layout.front
        chans, a = _arx(ins, outs, na, nb)
        parts = []
        for b in chans:
            parts += [b, a[1:]]
        if layout.kind is Kind.LINEAR:
            return np.concatenate(parts), 0.0
        xs = [sum(lfilter(b, a, u[:, c]) for c, b in enumerate(chans)) for u in ins]
        lo, hi = _span(xs)
        bp = np.linspace(lo, hi, B)
        return np.concatenate(parts + [bp, bp]), 1e-6 * (hi - lo)
    if layout.kind is Kind.HAMMERSTEIN:
        na, nb = layout.back
        s = [u.sum(axis=1) for u in ins]
        (b,), a = _arx([v[:, None] for v in s], outs, na, nb)
        lo, hi = _span(s)
        bp = np.linspace(lo, hi, B)
        return np.concatenate([bp, bp, b, a[1:]]), 1e-6 * (hi - lo)
    raise ValueError(f"no direct initialization for {layout.kind.value}")


def _repair(theta, layout: Layout, fallback, min_gap):
    """Make a perturbed start admissible: stable filters, ordered breakpoints."""
    theta = theta.copy()
    pos = 0
    if layout.front is not None:
        na, nb = layout.front
        for _ in range(layout.n_inputs):
            a = np.concatenate([[1.0], theta[pos + nb:pos + nb + na]])
            theta[pos + nb:pos + nb + na] = stabilize_denominator(a)[1:]
            pos += na + nb
    if layout.n_breakpoints:
        B = layout.n_breakpoints
        order = np.argsort(theta[pos:pos + B], kind="stable")
        theta[pos:pos + B] = theta[pos:pos + B][order]
        theta[pos + B:pos + 2 * B] = theta[pos + B:pos + 2 * B][order]
        if not np.all(np.diff(theta[pos:pos + B]) > min_gap):
            theta[pos:pos + B] = fallback[pos:pos + B]
        pos += 2 * B
    if layout.back is not None:
        na, nb = layout.back
        a = np.concatenate([[1.0], theta[pos + nb:pos + nb + na]])
        theta[pos + nb:pos + nb + na] = stabilize_denominator(a)[1:]
    return theta


_KIND_CODE = {Kind.LINEAR: 0, Kind.HAMMERSTEIN: 1, Kind.WIENER: 2, Kind.WIENER_HAMMERSTEIN: 3}


def _layout_for(kind: Kind, m: int, na: int, nb: int, B: int) -> Layout:
    if kind is Kind.LINEAR:
        return Layout(kind, m, front=(na, nb))
    if kind is Kind.WIENER:
        return Layout(kind, m, front=(na, nb), n_breakpoints=B)
    if kind is Kind.HAMMERSTEIN:
        return Layout(kind, m, back=(na, nb), n_breakpoints=B)
    raise ValueError(kind)


def fit_layout(layout: Layout, split: _Split, config: SearchConfig, tries: int, seed_key=()):
    """Best of ``tries`` LM runs (first from the deterministic start).

    Returns ``(theta, cost, restart_costs, status)``; ``theta`` is ``None``
    when no run produced an admissible model.
    """
    theta0, min_gap = _initial_theta(layout, split)
    sim = Simulator(layout, split.id_inputs, min_gap)
    y = np.concatenate(split.id_outputs)

    def residuals(theta, jac):
        out = sim(theta, jac)
        if out is None:
            return None
        return out[0] - y, out[1]

    best = (None, math.inf, "no admissible start")
    costs = []
    for attempt in range(tries):
        start = theta0
        if attempt:
            rng = np.random.default_rng([int(config.seed), *seed_key, attempt])
            start = theta0 + rng.normal(0.0, 1.0, theta0.size) * 0.1 * np.abs(theta0)
            start = _repair(start, layout, theta0, min_gap)
        res = levenberg_marquardt(
            residuals, start, config.max_iterations, config.ftol, config.ftol_window, config.gtol, config.xtol
        )
        costs.append(res.cost)
        if res.cost < best[1]:
            best = (res.x, res.cost, res.status)
    return best[0], best[1], tuple(costs), best[2]


def _candidate(task):
    kind, m, na, nb, split, config, tries = task
    layout = _layout_for(kind, m, na, nb, config.breakpoint_count)
    try:
        theta, cost, costs, status = fit_layout(layout, split, config, tries, (_KIND_CODE[kind], na, nb))
    except (np.linalg.LinAlgError, ValueError) as exc:
        return na, nb, None, None, f"failed: {exc}", math.inf, ()
    if theta is None or not math.isfinite(cost):
        return na, nb, None, None, f"discarded: {status}", math.inf, costs
    model = layout.to_model(theta)
    if not all(is_stable(tf) for tf in model.transfer_functions()):
        return na, nb, None, None, "discarded: unstable", cost, costs
    if kind is not Kind.LINEAR:
        model = normalize_gains(model)
    report = _report(model, split)
    return na, nb, model, report, status, cost, costs


def _map(fn, tasks, jobs):
    if jobs is None or jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, tasks))


def _search(kind: Kind, split: _Split, config: SearchConfig, jobs: int = 1) -> Estimate:
    tries = 1 if kind is Kind.LINEAR else config.restarts
    grid = config.order_grid()
    tasks = [(kind, split.n_inputs, na, nb, split, config, tries) for na, nb in grid]
    results = _map(_candidate, tasks, jobs)
    best = None
    summaries = []
    diagnostics = {}
    for index, (na, nb, model, report, status, cost, costs) in enumerate(results):
        fit = report.mean_fit if report is not None else math.nan
        summaries.append(CandidateSummary(na, nb, status, cost, fit, tuple(costs)))
        if model is None:
            diagnostics[f"na={na},nb={nb}"] = status
            continue
        key = _rank_key(report, index)
        if best is None or key < best[0]:
            best = (key, model, report, na, nb)
    if best is None:
        raise EstimationFailedError(f"no admissible {kind.value} candidate converged", diagnostics)
    _, model, report, na, nb = best
    report = report.with_verdict(f"selected {kind.value} na={na} nb={nb} of {len(grid)} candidates")
    return Estimate(model, report, tuple(summaries))


# ------------------------------------------------------------------ public estimators

def estimate_linear(problem: EstimationProblem, jobs: int = 1) -> Estimate:
    """Grid search of per-channel transfer functions (no nonlinearity)."""
    if problem.kind is not Kind.LINEAR:
        raise ValueError(f"estimate_linear needs kind Linear, got {problem.kind.value}")
    return _search(Kind.LINEAR, _split_of(problem), problem.config, jobs)


def estimate_block(problem: EstimationProblem, jobs: int = 1) -> Estimate:
    """Grid search of Wiener or Hammerstein models with restarts."""
    if problem.kind not in (Kind.WIENER, Kind.HAMMERSTEIN):
        raise ValueError(f"estimate_block needs kind Wiener or Hammerstein, got {problem.kind.value}")
    return _search(problem.kind, _split_of(problem), problem.config, jobs)


def _simulate_all(model, inputs):
    return tuple(simulate_model(model, u) for u in inputs)


def _as_wh(model: BlockModel, lo: float, hi: float, B: int) -> BlockModel:
    """Express a Linear/Wiener/Hammerstein/WH model as an equivalent WH model."""
    if model.kind is Kind.WIENER_HAMMERSTEIN:
        return model
    g = model.nonlinearity
    if g is None:
        bp = np.linspace(lo, hi, max(B, 2))
        g = PiecewiseLinearMap(bp, bp)
    channels = model.channels
    if channels is None:
        channels = tuple(identity() for _ in range(model.input_channels))
    back = model.back if model.back is not None else identity()
    return BlockModel(Kind.WIENER_HAMMERSTEIN, model.input_channels, channels, g, back)


def _keep_if_better(composed: BlockModel, first_stage: BlockModel, split: _Split, label: str):
    """Composition is kept only if it lowers identification cost and keeps the mean fit."""
    rc = _report(composed, split)
    rf = _report(first_stage, split)
    better_fit = not (math.isfinite(rf.mean_fit) and math.isfinite(rc.mean_fit)) or rc.mean_fit >= rf.mean_fit
    if rc.identification_cost <= rf.identification_cost and better_fit:
        return composed, rc.with_verdict(f"{label}: refined"), rf
    return first_stage, rf.with_verdict(f"{label}: second stage rejected, first stage kept"), rf


def _pad(tf: TransferFunction, na: int, nb: int) -> TransferFunction:
    # trailing zero coefficients leave the transfer function unchanged
    b = np.concatenate([tf.numerator, np.zeros(nb - len(tf.numerator))])
    a = np.concatenate([tf.denominator, np.zeros(na - tf.n_poles)])
    return TransferFunction(b, a)


def _reduced(model: BlockModel) -> BlockModel:
    chans = [minreal(tf) for tf in model.channels]
    na = max(tf.n_poles for tf in chans)
    nb = max(len(tf.numerator) for tf in chans)
    chans = tuple(_pad(tf, na, nb) for tf in chans)
    back = minreal(model.back) if model.back is not None else None
    return BlockModel(model.kind, model.input_channels, chans, model.nonlinearity, back)


def _refine(model: BlockModel, split: _Split, config: SearchConfig) -> BlockModel:
    """Joint output-error refinement of all blocks of a composed model.

    Nearly cancelling pole/zero pairs are removed first; they tend to pin a
    pole at the stability boundary and stall the optimizer.
    """
    model = _reduced(model)
    layout = layout_of(model)
    theta0 = pack(model)
    bp = np.asarray(model.nonlinearity.breakpoints)
    min_gap = 1e-6 * float(bp[-1] - bp[0])
    sim = Simulator(layout, split.id_inputs, min_gap)
    if not sim.admissible(theta0):
        return model
    y = np.concatenate(split.id_outputs)

    def residuals(theta, jac):
        out = sim(theta, jac)
        return None if out is None else (out[0] - y, out[1])

    res = levenberg_marquardt(
        residuals, theta0, config.max_iterations, config.ftol, config.ftol_window, config.gtol, config.xtol
    )
    return normalize_gains(layout.to_model(res.x))


def _path_wiener_linear(split, config, jobs, wiener: Estimate):
    B = config.breakpoint_count
    xw_id = _simulate_all(wiener.model, split.id_inputs)
    xw_val = _simulate_all(wiener.model, split.val_inputs)
    second = _search(Kind.LINEAR, split.with_inputs(xw_id, xw_val), config, jobs)
    h2 = second.model.channels[0]
    composed = normalize_gains(
        BlockModel(Kind.WIENER_HAMMERSTEIN, wiener.model.input_channels, wiener.model.channels,
                   wiener.model.nonlinearity, h2)
    )
    composed = _refine(composed, split, config)
    lo, hi = _span(xw_id)
    first = _as_wh(wiener.model, lo, hi, B)
    model, report, first_report = _keep_if_better(composed, first, split, "wiener+linear")
    return Estimate(model, report, second.candidates, {"first": wiener, "second": second, "first_report": first_report})


def _path_linear_hammerstein(split, config, jobs, linear: Estimate):
    B = config.breakpoint_count
    xl_id = _simulate_all(linear.model, split.id_inputs)
    xl_val = _simulate_all(linear.model, split.val_inputs)
    second = _search(Kind.HAMMERSTEIN, split.with_inputs(xl_id, xl_val), config, jobs)
    composed = normalize_gains(
        BlockModel(Kind.WIENER_HAMMERSTEIN, linear.model.input_channels, linear.model.channels,
                   second.model.nonlinearity, second.model.back)
    )
    composed = _refine(composed, split, config)
    lo, hi = _span(xl_id)
    first = normalize_gains(_as_wh(linear.model, lo, hi, B))
    model, report, first_report = _keep_if_better(composed, first, split, "linear+hammerstein")
    return Estimate(model, report, second.candidates, {"first": linear, "second": second, "first_report": first_report})


def _extend_prefix(split, config, jobs, prefix: BlockModel) -> Estimate:
    """Fit a linear filter in series after a frozen model."""
    x_id = _simulate_all(prefix, split.id_inputs)
    x_val = _simulate_all(prefix, split.val_inputs)
    second = _search(Kind.LINEAR, split.with_inputs(x_id, x_val), config, jobs)
    h = second.model.channels[0]
    if prefix.kind in (Kind.WIENER, Kind.WIENER_HAMMERSTEIN, Kind.HAMMERSTEIN):
        back = h if prefix.back is None else series(prefix.back, h)
        kind = Kind.HAMMERSTEIN if prefix.kind is Kind.HAMMERSTEIN else Kind.WIENER_HAMMERSTEIN
        composed = normalize_gains(BlockModel(kind, prefix.input_channels, prefix.channels, prefix.nonlinearity, back))
    else:
        composed = BlockModel(Kind.LINEAR, prefix.input_channels, tuple(series(tf, h) for tf in prefix.channels))
    model, report, first_report = _keep_if_better(composed, prefix, split, "prefix+linear")
    return Estimate(model, report, second.candidates, {"second": second, "first_report": first_report})


def estimate_wh(problem: EstimationProblem, jobs: int = 1, prefix: BlockModel | None = None,
                stages: Mapping | None = None) -> Estimate:
    """Two-stage Wiener-Hammerstein estimation.

    Route (a) fits a Wiener model and then a linear filter on its output;
    route (b) fits a linear model and then a Hammerstein model on its output.
    The route with the higher mean fit is returned; ``stages`` of the result
    holds ``linear``, ``wiener`` and both composed routes.

    With ``prefix`` only route (a) runs, with ``prefix`` frozen in place of
    the Wiener stage (e.g. to add a load-dependent filter to an existing
    model).  Precomputed first stages can be passed via ``stages`` as
    ``{"linear": Estimate, "wiener": Estimate}``.
    """
    if problem.kind is not Kind.WIENER_HAMMERSTEIN:
        raise ValueError(f"estimate_wh needs kind WienerHammerstein, got {problem.kind.value}")
    split = _split_of(problem)
    config = problem.config
    if prefix is not None:
        if prefix.input_channels != problem.n_inputs:
            raise ShapeError("prefix model input count does not match the datasets")
        return _extend_prefix(split, config, jobs, prefix)
    stages = dict(stages or {})
    errors = {}
    routes = {}
    try:
        wiener = stages.get("wiener") or _search(Kind.WIENER, split, config, jobs)
        routes["wiener+linear"] = _path_wiener_linear(split, config, jobs, wiener)
        stages["wiener"] = wiener
    except EstimationFailedError as exc:
        errors["wiener+linear"] = exc.diagnostics or str(exc)
    try:
        linear = stages.get("linear") or _search(Kind.LINEAR, split, config, jobs)
        routes["linear+hammerstein"] = _path_linear_hammerstein(split, config, jobs, linear)
        stages["linear"] = linear
    except EstimationFailedError as exc:
        errors["linear+hammerstein"] = exc.diagnostics or str(exc)
    if not routes:
        raise EstimationFailedError("both Wiener-Hammerstein construction routes failed", errors)
    ranked = sorted(routes.items(), key=lambda kv: _rank_key(kv[1].report, 0 if kv[0] == "wiener+linear" else 1))
    label, best = ranked[0]
    stages.update(routes)
    report = best.report.with_verdict(f"selected route {label} ({best.report.verdict})")
    return Estimate(best.model, report, best.candidates, stages)


def estimate(problem: EstimationProblem, jobs: int = 1) -> Estimate:
    """Dispatch on ``problem.kind``."""
    if problem.kind is Kind.LINEAR:
        return estimate_linear(problem, jobs)
    if problem.kind is Kind.WIENER_HAMMERSTEIN:
        return estimate_wh(problem, jobs)
    return estimate_block(problem, jobs)


def _same_data(p: EstimationProblem, q: EstimationProblem) -> bool:
    def sig(prob):
        return [(d.name, d.role) for d in prob.identification + prob.validation]

    if sig(p) != sig(q):
        return False
    return all(np.array_equal(a.inputs, b.inputs) for a, b in zip(p.identification + p.validation,
                                                                  q.identification + q.validation))


def estimate_miso_bundle(problems: Sequence[EstimationProblem], jobs: int = 1, return_estimates: bool = False):
    """Independent MISO estimation per output channel, packed into a bundle."""
    problems = list(problems)
    if not problems:
        raise ShapeError("need at least one problem")
    for p in problems[1:]:
        if not _same_data(problems[0], p):
            raise ShapeError("all problems of a bundle must reference the same datasets and inputs")
    done = []
    for i, p in enumerate(problems):
        try:
            done.append(estimate(p, jobs))
        except EstimationFailedError as exc:
            raise PartialResultError(
                f"estimation of output {p.output_channel} ({i + 1}/{len(problems)}) failed; "
                f"{len(done)} member(s) completed",
                completed=done,
                diagnostics=exc.diagnostics,
            ) from exc
    first = problems[0]
    meta = {
        "tool": "blockid",
        "version": __version__,
        "seed": int(first.config.seed),
        "identification": [d.name for d in first.identification],
        "validation": [d.name for d in first.validation],
        "output_channels": [p.output_channel for p in problems],
        "output_names": [first.identification[0].output_names[p.output_channel] for p in problems],
        "kinds": [p.kind.value for p in problems],
        "search": first.config.as_dict(),
    }
    bundle = ModelBundle(tuple(e.model for e in done), meta)
    return (bundle, done) if return_estimates else bundle


@dataclass(frozen=True)
class Verdict:
    kind: str
    report: FitReport
    ranking: tuple


def select_best(reports) -> Verdict:
    """Pick the highest mean fit; ties go to lower scaled RMS, then fewer parameters.

    ``reports`` maps a label (usually the model kind) to a :class:`FitReport`
    or :class:`Estimate`; a plain sequence of reports is labelled by kind.
    """
    if isinstance(reports, Mapping):
        items = list(reports.items())
    else:
        items = [(r.report.kind if isinstance(r, Estimate) else r.kind, r) for r in reports]
    if not items:
        raise ValueError("select_best needs at least one report")
    items = [(k, r.report if isinstance(r, Estimate) else r) for k, r in items]
    ranked = sorted(range(len(items)), key=lambda i: _rank_key(items[i][1], i))
    k, r = items[ranked[0]]
    return Verdict(str(k.value if isinstance(k, Kind) else k), r, tuple(str(items[i][0]) for i in ranked))
