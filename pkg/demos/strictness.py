"""Total mean curvature margins for geodesic balls in S^3 and H^3.

The spherical margin of a cap of radius r0 is Area tan(r0) / 2, the hyperbolic one
is Area sinh(r0)^2 tanh(r0) / 2. Both are strictly positive, and the computed
values track the closed forms as r0 varies.
"""

import numpy as np

from rbl.catalog import build_catalog_surface
from rbl.immersion import hyperbolic_check, spherical_check

print("spherical caps")
for r0 in (np.pi / 6, np.pi / 4, np.pi / 3):
    s, imm = build_catalog_surface("spherical_cap", {"k": 1.0, "r0": r0}, 48)
    r = spherical_check(s, imm)
    oracle = 4 * np.pi * np.sin(r0) ** 2 * np.tan(r0) / 2
    print(f"  r0 = {r0:.4f}: margin {r.margin:.8f}  closed form {oracle:.8f}  {r.verdict}")

print("hyperbolic balls")
for r0 in (0.5, 1.0, 2.0):
    s, imm = build_catalog_surface("hyperbolic_ball", {"k": 1.0, "r0": r0}, 48)
    r = hyperbolic_check(s, imm)
    oracle = 4 * np.pi * np.sinh(r0) ** 4 * np.tanh(r0) / 2
    print(f"  r0 = {r0:.1f}: margin {r.margin:.6f}  closed form {oracle:.6f}  {r.verdict}")
