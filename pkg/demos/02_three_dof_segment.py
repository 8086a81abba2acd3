"""Pose estimation for a three-contractor segment (three MISO models).

Three foam contractors sit on the corners of an equilateral triangle.  The
segment's tilt about x and y and its height change each depend on all three
resistance signals, so one multi-input, single-output model is identified
per pose output and the three are stored together as a bundle.

Every subset of contractors is pulsed at -10/-60 kPa for identification
and at -20/-40 kPa for validation.  Takes under a minute with the reduced
grid used here.
"""
import argparse

import numpy as np

from blockid import EstimationProblem, Kind, SearchConfig
from blockid.estimate import estimate_miso_bundle
from blockid.plant import get_plant, standard_datasets


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--max-poles", type=int, default=5)
    args = ap.parse_args()

    ident, val = standard_datasets(get_plant("miso3"), seed=args.seed)
    names = ident[0].output_names
    print("inputs:", ", ".join(ident[0].input_names), "| outputs:", ", ".join(names))

    config = SearchConfig(max_poles=args.max_poles, max_zeros=args.max_poles - 1, seed=args.seed)
    problems = [EstimationProblem(ident, val, Kind.WIENER_HAMMERSTEIN, ch, config) for ch in range(3)]
    bundle, estimates = estimate_miso_bundle(problems, return_estimates=True)

    print("\n                 mean fit (all datasets)   validation fit")
    print("output              WH      linear          WH      linear")
    for name, est in zip(names, estimates):
        wh, lin = est.report, est.stages["linear"].report
        print(f"{name:15s} {wh.mean_fit:6.1f}% {lin.mean_fit:9.1f}% {wh.validation_fit:10.1f}% {lin.validation_fit:9.1f}%")

    # the bundle predicts all three outputs at once from normalized inputs
    ds = val[-1]
    pred = bundle.simulate(ds.inputs / 100.0)
    err = np.sqrt(np.mean((pred - ds.outputs) ** 2, axis=0))
    print("\nRMS error on", ds.name, ":", ", ".join(f"{n} {e:.2f}" for n, e in zip(names, err)))


if __name__ == "__main__":
    main()
