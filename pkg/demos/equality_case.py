"""Unit ball in R^3 with eta = x1: the boundary inequality is an equality.

A = 2 pi / 3, B = -4 pi / 3, C = 0, so Q(t) = A + 2 B t + C t^2 vanishes at t = 0
and the first eigenvalue of the boundary sits at the band edge lambda1 = 2.
"""

import numpy as np

from rbl.catalog import build_catalog_surface
from rbl.functionals import check_main_inequality, dichotomy, functionals_ABC
from rbl.surface import BoundaryFunction

s, _ = build_catalog_surface("euclidean_ball", {"r": 1.0}, 48)
recipe = lambda surf: surf.X[:, 0].copy()
eta = BoundaryFunction(s, recipe(s), "x1", recipe)

A, B, C = functionals_ABC(s, eta)
print(f"A = {A:.12f}  (2 pi / 3 = {2 * np.pi / 3:.12f})")
print(f"B = {B:.12f}  (-4 pi / 3 = {-4 * np.pi / 3:.12f})")
print(f"C = {C:.2e}")

r = check_main_inequality(s, eta, 0.0, 0.0)
print(f"lhs = {r.lhs:.10f}, rhs = {r.rhs:.10f}, tol = {r.tol:.1e}, verdict: {r.verdict}")
for note in r.notes:
    print("  note:", note)

d = dichotomy(s, eta, 0.0)
print(f"case 1 holds: {d.case1_holds}, case-2 bound {d.case2_bound:.2e}, verdict {d.verdict}")
