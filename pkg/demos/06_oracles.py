"""Closed-form references: affine stretches between rectangles and the calibration battery.

    python demos/06_oracles.py
"""
import numpy as np

from lpteich.optimizer import SolveConfig, solve
from lpteich.oracle import calibration_battery, grotzsch_problem, inverse_pair
from lpteich.energy import energy_inverse_power, energy_power

# Affine maps minimize among maps between rectangles with affine boundary values.
for a in (1.5, 2.0):
    g = grotzsch_problem(a)
    for p in (2, 3):
        r = solve(SolveConfig(p=p, perturbation=0.02, seed=1), mesh=g.mesh, boundary_images=g.boundary_images)
        dev = np.max(np.abs(r.map.images - g.minimizer.images))
        print(f"a={a} p={p}: energy {r.energy.value:.12f} (exact {g.energy(p):.12f}), deviation {dev:.1e}")

# A smooth diffeomorphism and its inverse sampled on an unrelated mesh.
pair = inverse_pair(0.1, 0.05)
print("forward energy", energy_power(pair.f.mesh, pair.f, 2).value,
      "inverse-side energy", energy_inverse_power(pair.h.mesh, pair.h, 2).value)

checks = calibration_battery()
for c in checks:
    print(f"{'ok  ' if c.passed else 'FAIL'} {c.name}: {c.value:.3g}")
