"""Property suites over the catalog with seeded random polynomial test functions."""

import json

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from conftest import CATALOG_CASES, catalog, random_eta
from rbl.functionals import check_main_inequality, dichotomy, functionals_ABC
from rbl.immersion import (euclidean_check, from_coordinates, hyperbolic_check,
                           hyperbolic_support_identities, sphere_support_identities,
                           spherical_check)
from rbl.reports import to_json
from rbl.runner import random_polynomial, run
from rbl.scenario import parse_scenario
from rbl.spaceform import SpaceForm, random_lorentz, random_rotation

PROPS = settings(max_examples=12, deadline=None,
                 suppress_health_check=[HealthCheck.function_scoped_fixture])
seeds = st.integers(min_value=0, max_value=2**31 - 1)
case = st.sampled_from(CATALOG_CASES)


@PROPS
@given(case=case, seed=seeds)
def test_integration_by_parts(case, seed):
    name, params = case
    s, _ = catalog(name, **params)
    f = random_polynomial(seed, 0, s.coord_dim)(s.X)
    g = random_polynomial(seed, 1, s.coord_dim)(s.X)
    scale = np.sqrt(s.integrate(f * f) * s.integrate(s.laplacian(g) ** 2)) + 1.0
    assert abs(s.integrate(f * s.laplacian(g)) + s.integrate(s.grad_dot(f, g))) < 1e-9 * scale
    assert abs(s.integrate(f * s.laplacian(g)) - s.integrate(g * s.laplacian(f))) < 1e-9 * scale


@PROPS
@given(case=case, seed=seeds)
def test_main_inequality_and_dichotomy(case, seed):
    name, params = case
    s, _ = catalog(name, **params)
    k = s.space.curvature
    eta = random_eta(s, seed)
    r = check_main_inequality(s, eta, s.intrinsic_dim * k / 2, k)
    assert r.verdict in ("pass", "equality")
    assert dichotomy(s, eta, k).verdict in ("pass", "equality")


@PROPS
@given(seed=seeds, lam=st.floats(min_value=0.3, max_value=3.0),
       shape=st.sampled_from([("euclidean_ball", {}), ("euclidean_ball", {"dim": 2}),
                              ("euclidean_ellipsoid", {"a": 1.5, "b": 1.0, "c": 0.7}),
                              ("curve_domain_2d", {"cos": (0.15,), "sin": (0.0, 0.1)})]))
def test_scaling_covariance(seed, lam, shape):
    # under x -> lam x with eta transported: A ~ lam^n, B ~ lam^(n-2), C ~ lam^(n-4)
    name, params = shape
    s, _ = catalog(name, **params)
    if name == "euclidean_ball":
        big = dict(params, r=lam)
    elif name == "euclidean_ellipsoid":
        big = {key: lam * v for key, v in params.items()}
    else:
        big = dict(params, r0=lam, cos=tuple(lam * c for c in params["cos"]),
                   sin=tuple(lam * c for c in params["sin"]))
    t, _ = catalog(name, **big)
    f = random_polynomial(seed, 0, s.coord_dim)
    A, B, C = functionals_ABC(s, f(s.X))
    A2, B2, C2 = functionals_ABC(t, f(t.X / lam))
    n = s.intrinsic_dim + 1
    assert A2 == pytest.approx(lam**n * A, rel=1e-8)
    assert B2 == pytest.approx(lam ** (n - 2) * B, rel=1e-8, abs=1e-8 * abs(A))
    assert C2 == pytest.approx(lam ** (n - 4) * C, rel=1e-7, abs=1e-8 * abs(B))


@PROPS
@given(seed=seeds)
def test_ambient_isometry_invariance(seed):
    rng = np.random.default_rng(seed)
    s, imm = catalog("spherical_cap", r0=1.0)
    R = random_rotation(rng, 4)
    a, b = spherical_check(s, imm), spherical_check(s, imm.transformed(R))
    assert b.margin == pytest.approx(a.margin, rel=1e-9)
    alpha = SpaceForm.sphere(3).random_points(rng, 1)[0]
    r1 = sphere_support_identities(s, imm, alpha)
    r2 = sphere_support_identities(s, imm.transformed(R), R @ alpha)
    assert np.allclose(r1["f"], r2["f"], atol=1e-12)
    assert max(np.max(np.abs(r2[k])) for k in ("i", "ii", "iii")) < 1e-8

    s, imm = catalog("hyperbolic_ball", r0=1.0)
    L = random_lorentz(rng, 4)
    a, b = hyperbolic_check(s, imm), hyperbolic_check(s, imm.transformed(L), time_axis=L[:, 0])
    for key in ("lhs", "rhs", "margin"):
        assert getattr(b, key) == pytest.approx(getattr(a, key), rel=1e-9)
    alpha = SpaceForm.hyperbolic(3).random_points(rng, 1)[0]
    r1 = hyperbolic_support_identities(s, imm, alpha)
    r2 = hyperbolic_support_identities(s, imm.transformed(L), L @ alpha)
    assert np.allclose(r1["f"], r2["f"], atol=1e-10)

    s, _ = catalog("euclidean_ellipsoid", a=1.5, b=1.0, c=0.7)
    R = random_rotation(rng, 5)
    e = from_coordinates(s, SpaceForm.euclidean(5), np.hstack([s.X, np.zeros((s.n_nodes, 2))]))
    assert euclidean_check(s, e.transformed(R)).margin == pytest.approx(
        euclidean_check(s, e).margin, abs=1e-8)


@settings(max_examples=4, deadline=None)
@given(seed=st.integers(min_value=0, max_value=10**6))
def test_report_determinism(seed):
    text = json.dumps({
        "schema_version": 1, "name": "det", "seed": seed, "resolution": 16,
        "geometry": {"catalog": "hyperbolic_ball", "params": {"r0": 0.8}},
        "checks": [{"type": "main_inequality", "t": -1, "k": -1, "eta": "random"},
                   {"type": "dichotomy", "k": -1},
                   {"type": "support_identities", "count": 3},
                   {"type": "hyperbolic_tmc"}]})
    first = to_json(run(parse_scenario(text)))
    second = to_json(run(parse_scenario(text), parallel=True))
    assert first == second
    assert json.loads(first)["provenance"]["seed"] == seed
