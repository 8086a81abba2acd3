"""Design helpers: porosity, coiling radius, stiffness law and marker geometry.

* porosity of printed samples from their mass and volume,
* coiling radius from nozzle height on the calibrated line,
* a power law relating porosity to the pressure needed for full
  contraction, fitted on noisy measurements,
* curvature and contraction strain from tracked markers, turned into
  datasets that can serve as identification outputs.
"""
import numpy as np

from blockid.curvefit import fit_power_law
from blockid.geometry import (
    DesignSample,
    MarkerFrame,
    coiling_radius,
    contraction_strain,
    fit_circle_curvature,
    frames_to_dataset,
    porosity_from_mass,
)


def main():
    rng = np.random.default_rng(1)

    print("porosity from mass (1 cm^3 samples, bulk density 0.97 g/cm^3):")
    for m in (0.97 * 0.32, 0.97 * 0.24, 0.97 * 0.18, 0.97 * 0.14):
        print(f"  m = {m:.4f} g -> {porosity_from_mass(DesignSample(m, 1.0))} %")

    print("\ncoiling radius:", ", ".join(f"H={h:g} mm -> {coiling_radius(h):.2f} mm" for h in (2.5, 5, 7.5, 10)))

    phi = np.repeat([68.0, 76.0, 82.0, 86.0], 3)
    p_full = 80.0 * (1 - phi / 100) ** 1.2 * (1 + 0.05 * rng.normal(size=phi.size))
    law = fit_power_law(np.column_stack([phi, p_full]))
    print(f"\npower law p_f = {law.C:.1f} (1 - phi/100)^{law.n:.2f}, R^2 = {law.r_squared:.3f}")

    # a bending actuator tracked by six markers, curling up over ten frames
    frames = []
    for k in range(10):
        r = 200.0 / (1 + k)
        t = np.linspace(0, 60.0 / r, 6)
        pts = np.column_stack([r * np.sin(t), r * (1 - np.cos(t))]) + rng.normal(scale=0.05, size=(6, 2))
        frames.append(MarkerFrame(0.1 * k, pts))
    fit = fit_circle_curvature(frames[-1], direction=(0, 1))
    print(f"\nlast frame: radius {fit.radius:.1f} mm, curvature {fit.curvature:.4f} 1/mm")
    ds = frames_to_dataset(frames, "curvature", direction=(0, 1))
    print("curvature dataset:", np.round(ds.outputs[:, 0], 4))

    print(f"\ncontractor marker 12.5 mm higher on a 50 mm body: {contraction_strain(0.0, 12.5, 50.0):.0f} % strain")


if __name__ == "__main__":
    main()
