"""Relative consistency error (D u_M - det M) / D u_M on quadratic functions.

Zero entries are matrices the scheme reproduces exactly.  The finite
difference scheme is exact everywhere, while the monotone schemes are exact
only on part of the (kappa, theta) plane, a part that grows with the stencil.

Run: python3 demos/02_consistency_maps.py
"""

import math

import numpy as np

from malbr.harness import consistency_map
from malbr.lattice import stencil_with_points

kappas = np.linspace(1, 12, 23)
thetas = np.linspace(0, math.pi, 37)
print(f"{'scheme':>8} {'points':>6} {'exact share':>12} {'max error':>10}")
for scheme in ("lbr", "ws"):
    for count in (8, 16, 24, 48):
        cmap = consistency_map(scheme, stencil_with_points(count), kappas, thetas)
        share = np.mean(cmap.errors <= 1e-14)
        print(f"{scheme:>8} {count:>6} {share:>12.2%} {cmap.errors.max():>10.3f}")
fd = consistency_map("fd", None, kappas, thetas)
print(f"{'fd':>8} {'-':>6} {np.mean(np.abs(fd.errors) <= 1e-14):>12.2%} {np.abs(fd.errors).max():>10.1e}")
