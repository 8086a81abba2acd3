"""Strain estimation for a porous foam actuator, end to end.

The synthetic foam plant maps vacuum pressure to a resistance change and a
hysteretic deformation.  We pretend only the resistance change and the
deformation were recorded, then:

1. look at the hysteresis of the raw sensor response,
2. identify a Linear and a Wiener-Hammerstein model from the standard
   split (gradual staircase and -10/-60 kPa steps identify, -20/-40 kPa
   steps validate),
3. compare them and let ``select_best`` pick one,
4. save the winner and reload it.

Run ``python demos/01_foam_actuator.py`` (seconds with the reduced order
grid) or add ``--full`` for the default 10-pole grid.
"""
import argparse
import tempfile
from pathlib import Path

from blockid import EstimationProblem, Kind, SearchConfig, load_model, save_model, select_best
from blockid.estimate import estimate_wh
from blockid.plant import get_plant, hysteresis_loop, standard_datasets


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--full", action="store_true", help="search the full default order grid")
    args = ap.parse_args()

    spec = get_plant("foam-wh")
    ident, val = standard_datasets(spec, seed=args.seed)
    print(f"plant {spec.name}: {len(ident)} identification and {len(val)} validation datasets, "
          f"output noise {spec.noise:.0%} of range")

    # The sensor lags the deformation more on a fast step than on a slow staircase.
    for ds in (ident[0], ident[2]):
        loop = hysteresis_loop(ds)
        print(f"  hysteresis {ds.name:8s} normalized loop area {loop.normalized_area:.3f}")

    config = SearchConfig(seed=args.seed) if args.full else SearchConfig(max_poles=6, max_zeros=5, seed=args.seed)
    est = estimate_wh(EstimationProblem(ident, val, Kind.WIENER_HAMMERSTEIN, config=config))
    linear = est.stages["linear"]  # the WH search fits the linear model on the way
    print("\nmodel               mean fit   mean RMS   validation fit")
    for label, e in (("Linear", linear), ("WienerHammerstein", est)):
        r = e.report
        print(f"{label:18s} {r.mean_fit:8.2f}% {r.mean_rms:9.2f}% {r.validation_fit:12.2f}%")
    print(f"WH construction: {est.report.verdict}; orders {est.model.orders()}")

    verdict = select_best({"Linear": linear, "WienerHammerstein": est})
    print(f"\nselected: {verdict.kind} (ranking {' > '.join(verdict.ranking)})")

    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "foam_wh.json"
        save_model(est.model, path)
        again = load_model(path)
        print(f"saved and reloaded {path.name}: identical model = {again.models[0] == est.model}")


if __name__ == "__main__":
    main()
