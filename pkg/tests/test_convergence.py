import numpy as np
import pytest

from conftest import catalog
from rbl.convergence import (convergence_table, estimate_tolerance, observed_orders,
                             richardson_orders, verdict_inequality, verdict_strict)
from rbl.runner import random_polynomial


def test_observed_orders_exact_power_law():
    h = np.array([0.4, 0.2, 0.1])
    assert np.allclose(observed_orders(h, 3 * h**2), 2.0)


def test_richardson_uniform_and_nonuniform():
    h = np.array([1 / 4, 1 / 6, 1 / 8, 1 / 10])
    values = 7.0 + 0.5 * h**3
    assert np.allclose(richardson_orders(values, h=h), 3.0, rtol=1e-6)
    values = 1.0 + np.array([1, 1 / 2, 1 / 4]) ** 2
    assert richardson_orders(values, ratio=2.0)[0] == pytest.approx(2.0)


def test_convergence_table_rows():
    rows = convergence_table([4, 8, 16], [0.1, 0.025, 0.00625], exact=0.0, h=[1 / 4, 1 / 8, 1 / 16])
    assert rows[0]["order"] is None
    assert rows[2]["order"] == pytest.approx(2.0)
    rows = convergence_table([4, 8, 16], [1.1, 1.025, 1.00625], h=[1 / 4, 1 / 8, 1 / 16])
    assert rows[1]["error"] == pytest.approx(0.075)
    assert rows[2]["order"] == pytest.approx(2.0)


def test_verdicts():
    assert verdict_inequality(1e-9, 1e-8) == "equality"
    assert verdict_inequality(1.0, 1e-8) == "pass"
    assert verdict_inequality(-1.0, 1e-8) == "fail"
    assert verdict_strict(1e-9, 1e-8) == "inconclusive"
    assert verdict_strict(1.0, 1e-8) == "pass"
    assert verdict_strict(-1.0, 1e-8) == "fail"


def test_tolerance_estimate_from_half_resolution():
    s, _ = catalog("euclidean_ellipsoid", a=1.5, b=1.0, c=0.7)
    value, tol = estimate_tolerance(lambda surf: surf.area, s)
    assert tol >= 1e-8
    assert abs(value - s.rebuild(16).area) <= tol


def test_spectral_convergence_of_functionals():
    f = random_polynomial(0, 0, 3)
    vals = []
    for res in (16, 24, 32):
        s, _ = catalog("euclidean_ellipsoid", resolution=res, a=1.5, b=1.0, c=0.7)
        vals.append(s.integrate(f(s.X) * s.laplacian(f(s.X)) / s.H))
    assert abs(vals[2] - vals[1]) < 0.1 * abs(vals[1] - vals[0]) + 1e-12
