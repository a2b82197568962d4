"""Contrast Poisson and perturbed-lattice number variance at matched windows.

Prints both moment curves with fitted envelopes and the hyperuniformity
verdict for each family.
"""

import numpy as np

from hyperwass.geometry import cube_for_count
from hyperwass.moments import classify_hyperuniformity, estimate_moment_curve, fit_envelope
from hyperwass.processes import ProcessSpec

AREAS = tuple(float(4 * 2**k) for k in range(9))


def main():
    cube = cube_for_count(4096, 2)
    for family, kw, seed in (
        ("poisson", {"intensity": 1.0}, 101),
        ("perturbed_lattice", {"perturbation": "uniform_box", "radius": 0.4}, 55),
    ):
        spec = ProcessSpec(family=family, seed=seed, **kw)
        curve = estimate_moment_curve(spec, cube, 2.0, AREAS, replicates=24, windows=64)
        env = fit_envelope(curve, "power")
        print(f"{family}: envelope gamma={env.gamma:.3f} epsilon={env.epsilon:.3f}")
        for area, moment, se in zip(curve.areas, curve.moments, curve.stderrs):
            print(f"  |B|={area:7.0f}  Var={moment:10.2f} +- {se:6.2f}  Var/|B|={moment / area:6.3f}")
        try:
            cls = classify_hyperuniformity(curve)
            print(f"  classification: {cls.classification} (beta {cls.beta:.3f} +- {cls.beta_se:.3f})")
        except ValueError as exc:
            print(f"  classification unavailable: {exc}")


if __name__ == "__main__":
    main()
