"""Interpolate the closed-form Gaussian map on the dictionary grid.

The closed-form optimal map for a Gaussian target is affine, so the
piecewise-linear dictionary reproduces it exactly inside the grid box; the
remaining error is the tail clamp beyond [-R, R]. This script shows that the
error is governed by R (it shrinks rapidly as R grows) and is insensitive to
the cell width delta.

Run with:  python3 demos/oracle_interpolation.py
"""

import numpy as np

import ssvi

cov = np.array([[1.0, 0.4, 0.3], [0.4, 1.0, 0.2], [0.3, 0.2, 1.2]])
tmap = ssvi.closed_form_star_map(np.zeros(3), cov)
alpha = np.concatenate(([tmap.root_scale], tmap.leaf_scale))

print("L2(rho) interpolation error of the closed-form map")
print(f"{'R':>4} {'delta':>6} {'p':>6} {'l2 error':>10}")
for R in (1.0, 2.0, 3.0, 4.0):
    for delta in (0.5, 0.25):
        spec = ssvi.build_dictionary(3, R, delta)
        params = ssvi.build_oracle_approximator(tmap, spec, alpha)
        err, _ = ssvi.l2_map_distance(params, tmap, spec, mc_n=200000, seed=0)
        print(f"{R:>4.1f} {delta:>6.2f} {spec.p:>6d} {err:>10.5f}")

print("\nNote the rows with equal R: halving delta leaves the error "
      "unchanged\n(the affine map is exact in-box), while each increase "
      "of R cuts the\ntail term sharply.")
