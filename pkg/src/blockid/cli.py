"""``blockid`` command line: generate data, fit, evaluate and select models.

Exit status: 0 success, 2 usage error, 3 data error, 4 estimation failure.
``BLOCKID_SEED`` in the environment overrides any seed given on the command
line or in a manifest.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .blockmodel import Kind, ModelBundle, load_model, save_model
from .curvefit import fit_exponential, fit_power_law
from .datasets import Role, TimeSeriesDataset, load_dataset, normalize_inputs, save_dataset
from .errors import BlockIdError, DataError, DomainError, EstimationFailedError, ModelFileError, UnknownPlantError
from .estimate import (
    EstimationProblem,
    FitReport,
    SearchConfig,
    estimate_miso_bundle,
    evaluate_model,
    select_best,
)
from .geometry import frames_to_dataset, load_markers
from .plant import ExcitationProgram, catalog_names, generate_excitation, get_plant, simulate_plant, standard_datasets

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_ESTIMATION = 0, 2, 3, 4


class UsageError(BlockIdError):
    pass


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _digests(paths) -> dict:
    return {Path(p).name: _sha256(p) for p in paths}


def _seed(value) -> int:
    env = os.environ.get("BLOCKID_SEED")
    if env is not None and env.strip():
        try:
            value = int(env)
        except ValueError:
            raise UsageError(f"BLOCKID_SEED must be an integer, got {env!r}") from None
    return int(value or 0)


def _provenance_lines(seed, inputs: dict) -> list:
    lines = [f"tool = blockid", f"version = {__version__}", f"seed = {seed}"]
    lines += [f"input.{name}.sha256 = {digest}" for name, digest in sorted(inputs.items())]
    return lines


def _write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _emit(text, out=None):
    if out:
        _write(out, text)
    sys.stdout.write(text)


# ------------------------------------------------------------------ gen

def _catalog_digest() -> str:
    from importlib import resources

    return hashlib.sha256(resources.files("blockid").joinpath("data/plants.json").read_bytes()).hexdigest()


def _gen(plant: str, seed: int, out: Path, program: str = "standard", level: float = -20.0,
         noise=None, dt: float = 0.1) -> list:
    spec = get_plant(plant)
    meta = {"version": __version__, "catalog_sha256": _catalog_digest()}
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if program == "standard":
        ident, val = standard_datasets(spec, seed, dt, noise)
        datasets = ident + val
    else:
        if noise is not None:
            from dataclasses import replace

            spec = replace(spec, noise=noise)
        m = spec.n_inputs
        prog = {
            "steps": lambda: ExcitationProgram.steps(level, m),
            "gradual": lambda: ExcitationProgram.gradual(channels=m),
            "mixed": lambda: ExcitationProgram.mixed(channels=m),
        }[program]()
        datasets = [simulate_plant(spec, generate_excitation(prog, dt), dt, seed, program, Role.IDENTIFICATION,
                                   {"program": prog.pattern, "level_kpa": prog.levels[0]})]
    for ds in datasets:
        ds = ds.replace(metadata={**ds.metadata, **meta, "seed": seed})
        path = out / f"{ds.name}.csv"
        save_dataset(ds, path)
        written.append(path)
    return written


def cmd_gen(args) -> int:
    seed = _seed(args.seed)
    written = _gen(args.plant, seed, Path(args.out), args.program, args.level, args.noise, args.dt)
    for p in written:
        print(p)
    return EXIT_OK


# ------------------------------------------------------------------ fit / search

def _config(args, seed) -> SearchConfig:
    return SearchConfig(
        max_poles=args.max_poles,
        max_zeros=args.max_zeros,
        breakpoint_count=args.breakpoints,
        max_iterations=args.max_iterations,
        restarts=args.restarts,
        seed=seed,
    )


def _load_sets(ident_paths, val_paths):
    if not ident_paths:
        raise UsageError("at least one identification dataset is required (--ident)")
    if not val_paths:
        raise UsageError("at least one validation dataset is required (--val)")
    ident = [load_dataset(p, role=Role.IDENTIFICATION) for p in ident_paths]
    val = [load_dataset(p, role=Role.VALIDATION) for p in val_paths]
    return ident, val


def _fit_kind(kind, ident, val, output, config, jobs, seed, digests):
    """-> (bundle, [reports])"""
    n_out = ident[0].n_outputs
    channels = list(range(n_out)) if output == "all" else [int(output)]
    problems = [EstimationProblem(ident, val, kind, ch, config) for ch in channels]
    bundle, estimates = estimate_miso_bundle(problems, jobs, return_estimates=True)
    meta = dict(bundle.metadata)
    meta["inputs"] = digests
    meta["reports"] = [
        {"output": ch, "mean_fit": e.report.mean_fit, "mean_rms": e.report.mean_rms, "verdict": e.report.verdict}
        for ch, e in zip(channels, estimates)
    ]
    return ModelBundle(bundle.models, meta), [e.report for e in estimates], channels


def _report_text(reports, channels, seed, digests, names) -> str:
    lines = _provenance_lines(seed, digests)
    text = "\n".join(lines) + "\n"
    for ch, rep in zip(channels, reports):
        text += f"output = {ch} {names[ch]}\n" + rep.to_text()
    return text


def cmd_fit(args) -> int:
    seed = _seed(args.seed)
    ident, val = _load_sets(args.ident, args.val)
    digests = _digests(list(args.ident) + list(args.val))
    bundle, reports, channels = _fit_kind(Kind.parse(args.kind), ident, val, args.output, _config(args, seed),
                                          args.jobs, seed, digests)
    if args.model:
        Path(args.model).parent.mkdir(parents=True, exist_ok=True)
        save_model(bundle, args.model)
    _emit(_report_text(reports, channels, seed, digests, ident[0].output_names), args.report)
    return EXIT_OK


def _parse_kv(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        if " = " in line:
            k, v = line.split(" = ", 1)
            out.setdefault(k.strip(), v.strip())
    return out


def _report_from_text(text: str) -> FitReport:
    kv = _parse_kv(text)
    try:
        return FitReport(
            kv["kind"], (), float(kv["mean_fit"]), float(kv["mean_rms"]), float(kv.get("se_fit", "nan")),
            float(kv.get("se_rms", "nan")), float(kv.get("identification_cost", "inf")), int(kv.get("n_params", 0)),
        )
    except (KeyError, ValueError) as exc:
        raise DataError(f"not a fit report (missing or bad field {exc})") from None


def cmd_select(args) -> int:
    reports = {}
    for p in args.reports:
        rep = _report_from_text(Path(p).read_text(encoding="utf-8"))
        reports[f"{rep.kind} ({Path(p).name})"] = rep
    verdict = select_best(reports)
    lines = [f"selected = {verdict.report.kind}", f"selected_report = {verdict.kind}",
             f"mean_fit = {verdict.report.mean_fit:.2f}", f"mean_rms = {verdict.report.mean_rms:.2f}",
             "ranking = " + " > ".join(verdict.ranking)]
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_search(args) -> int:
    """Full comparison run from a JSON manifest.

    Manifest keys: ``seed``, ``out`` and either ``plant`` (data generated
    with the standard split) or ``identification``/``validation`` path
    lists; optional ``kinds``, ``output`` ("all" or a channel), ``noise``
    and ``config`` (SearchConfig fields).
    """
    manifest_path = Path(args.manifest)
    try:
        man = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"manifest is not valid JSON: {exc}") from None
    seed = _seed(man.get("seed", 0))
    base = manifest_path.parent
    out = Path(args.out or man.get("out") or "run")
    if not out.is_absolute() and not args.out:
        out = base / out
    if "plant" in man:
        paths = _gen(man["plant"], seed, out / "data", "standard", noise=man.get("noise"))
        ident_paths = [p for p in paths if load_dataset(p).role is Role.IDENTIFICATION]
        val_paths = [p for p in paths if load_dataset(p).role is Role.VALIDATION]
    else:
        ident_paths = [base / p for p in man.get("identification", [])]
        val_paths = [base / p for p in man.get("validation", [])]
    ident, val = _load_sets(ident_paths, val_paths)
    digests = _digests(ident_paths + val_paths)
    digests[manifest_path.name] = _sha256(manifest_path)
    cfg_fields = dict(man.get("config", {}))
    if "orders" in cfg_fields and cfg_fields["orders"] is not None:
        cfg_fields["orders"] = tuple(tuple(o) for o in cfg_fields["orders"])
    try:
        config = SearchConfig(**{**cfg_fields, "seed": seed})
    except TypeError as exc:
        raise UsageError(f"bad config in manifest: {exc}") from None
    kinds = [Kind.parse(k) for k in man.get("kinds", ["Linear", "Hammerstein", "Wiener", "WienerHammerstein"])]
    output = man.get("output", "all" if ident[0].n_outputs > 1 else 0)
    per_kind = {}
    summary = _provenance_lines(seed, digests)
    for kind in kinds:
        bundle, reports, channels = _fit_kind(kind, ident, val, output, config, args.jobs, seed, digests)
        save_model(bundle, out / f"model_{kind.value}.json")
        _write(out / f"report_{kind.value}.txt", _report_text(reports, channels, seed, digests, ident[0].output_names))
        per_kind[kind] = reports
    for i, ch in enumerate(channels):
        verdict = select_best({k.value: reps[i] for k, reps in per_kind.items()})
        summary += [
            f"output.{ch}.selected = {verdict.kind}",
            f"output.{ch}.ranking = " + " > ".join(verdict.ranking),
        ]
        for k, reps in per_kind.items():
            summary += [f"output.{ch}.{k.value}.mean_fit = {reps[i].mean_fit:.2f}",
                        f"output.{ch}.{k.value}.mean_rms = {reps[i].mean_rms:.2f}"]
    text = "\n".join(summary) + "\n"
    _write(out / "selection.txt", text)
    sys.stdout.write(text)
    return EXIT_OK


# ------------------------------------------------------------------ eval / simulate

def cmd_eval(args) -> int:
    bundle = load_model(args.model)
    datasets = [load_dataset(p) for p in args.data]
    fitted = list(bundle.metadata.get("output_channels", range(len(bundle))))
    if args.output == "all":
        pairs = list(zip(bundle.models, fitted))
    else:
        ch = int(args.output)
        if ch in fitted:
            pairs = [(bundle[fitted.index(ch)], ch)]
        elif len(bundle) == 1:
            pairs = [(bundle[0], ch)]
        else:
            raise UsageError(f"model file has no model for output {ch}")
    lines = _provenance_lines(bundle.metadata.get("seed", 0), _digests([args.model] + list(args.data)))
    text = "\n".join(lines) + "\n"
    for model, ch in pairs:
        text += f"output = {ch} {datasets[0].output_names[ch]}\n" + evaluate_model(model, datasets, ch).to_text()
    _emit(text, args.report)
    return EXIT_OK


def cmd_simulate(args) -> int:
    bundle = load_model(args.model)
    ds = load_dataset(args.data)
    u = ds.inputs if ds.normalized else normalize_inputs(ds).inputs
    y = bundle.simulate(u)
    names = tuple(bundle.metadata.get("output_names", [])) or tuple(f"yhat{i + 1}" for i in range(y.shape[1]))
    if len(names) != y.shape[1]:
        names = tuple(f"yhat{i + 1}" for i in range(y.shape[1]))
    meta = {"version": __version__, "seed": bundle.metadata.get("seed", 0),
            "model_sha256": _sha256(args.model), "data_sha256": _sha256(args.data)}
    pred = TimeSeriesDataset(f"{ds.name}_sim", ds.sample_period, ds.inputs, y, ds.role, ds.input_names, names,
                             ds.normalized, meta)
    save_dataset(pred, args.out)
    print(args.out)
    return EXIT_OK


# ------------------------------------------------------------------ curvefit / geometry

def _points(path) -> np.ndarray:
    rows = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        cells = [c.strip() for c in s.split(",")]
        try:
            rows.append([float(c) for c in cells])
        except ValueError:
            if not rows:
                continue  # header
            raise DataError(f"{path}:{lineno}: non-numeric value") from None
        if len(rows[-1]) != 2:
            raise DataError(f"{path}:{lineno}: expected 2 columns")
    return np.array(rows, dtype=float).reshape(-1, 2)


def cmd_curvefit(args) -> int:
    pts = _points(args.points)
    lines = _provenance_lines(0, _digests([args.points])) + [f"law = {args.law}", f"n_points = {len(pts)}"]
    if args.law == "power":
        fit = fit_power_law(pts)
        lines += [f"C = {fit.C:.10g}", f"n = {fit.n:.10g}"]
    else:
        fit = fit_exponential(pts)
        lines += [f"a = {fit.a:.10g}", f"b = {fit.b:.10g}"]
    lines.append(f"r_squared = {fit.r_squared:.6f}")
    _emit("\n".join(lines) + "\n", args.report)
    return EXIT_OK


def cmd_geometry(args) -> int:
    frames = load_markers(args.markers)
    direction = None
    if args.direction:
        try:
            direction = [float(v) for v in args.direction.split(",")]
        except ValueError:
            raise UsageError("--direction expects 'x,y'") from None
    ds = frames_to_dataset(frames, args.mode, Path(args.markers).stem, args.rest_length, direction)
    ds = ds.replace(metadata={**ds.metadata, "version": __version__, "markers_sha256": _sha256(args.markers)})
    save_dataset(ds, args.out)
    print(args.out)
    return EXIT_OK


# ------------------------------------------------------------------ parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_search_flags(p):
    d = SearchConfig()
    p.add_argument("--kind", default="WienerHammerstein", help="Linear, Hammerstein, Wiener or WienerHammerstein")
    p.add_argument("--output", default="0", help="output channel index or 'all'")
    p.add_argument("--max-poles", type=int, default=d.max_poles)
    p.add_argument("--max-zeros", type=int, default=d.max_zeros)
    p.add_argument("--breakpoints", type=int, default=d.breakpoint_count)
    p.add_argument("--max-iterations", type=int, default=d.max_iterations)
    p.add_argument("--restarts", type=int, default=d.restarts)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1, help="worker processes for the order grid")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="blockid", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"blockid {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="generate synthetic plant datasets")
    p.add_argument("--plant", required=True, help="catalog name: " + ", ".join(catalog_names()))
    p.add_argument("--program", default="standard", choices=["standard", "steps", "gradual", "mixed"])
    p.add_argument("--level", type=float, default=-20.0, help="step level in kPa (steps program)")
    p.add_argument("--noise", type=float, default=None, help="override noise (fraction of output range)")
    p.add_argument("--dt", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="data")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("fit", help="estimate one model kind")
    p.add_argument("--ident", nargs="+", default=[], help="identification dataset CSVs")
    p.add_argument("--val", nargs="+", default=[], help="validation dataset CSVs")
    _add_search_flags(p)
    p.add_argument("--model", help="write the model file here")
    p.add_argument("--report", help="also write the report here")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("search", help="compare all model kinds from a JSON manifest")
    p.add_argument("manifest")
    p.add_argument("--out", help="output directory (overrides the manifest)")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("eval", help="metrics of a saved model on datasets")
    p.add_argument("--model", required=True)
    p.add_argument("--data", nargs="+", required=True)
    p.add_argument("--output", default="0", help="output channel index or 'all'")
    p.add_argument("--report")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("simulate", help="predicted outputs of a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("curvefit", help="power-law or exponential fit of a 2-column CSV")
    p.add_argument("--points", required=True)
    p.add_argument("--law", choices=["power", "exp"], default="power")
    p.add_argument("--report")
    p.set_defaults(func=cmd_curvefit)

    p = sub.add_parser("geometry", help="curvature or strain dataset from marker tracks")
    p.add_argument("--markers", required=True)
    p.add_argument("--mode", choices=["curvature", "strain"], required=True)
    p.add_argument("--rest-length", type=float, help="contractor rest length in mm (strain mode)")
    p.add_argument("--direction", help="'x,y' side of positive curvature")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_geometry)

    p = sub.add_parser("select", help="pick the best model from report files")
    p.add_argument("reports", nargs="+")
    p.add_argument("--out")
    p.set_defaults(func=cmd_select)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"blockid: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EstimationFailedError as exc:
        print(f"blockid: estimation failed: {exc}", file=sys.stderr)
        for key, val in sorted((exc.diagnostics or {}).items()):
            print(f"  {key}: {val}", file=sys.stderr)
        return EXIT_ESTIMATION
    except (DataError, DomainError, ModelFileError, UnknownPlantError, OSError, ValueError) as exc:
        print(f"blockid: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
