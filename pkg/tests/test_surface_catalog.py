import numpy as np
import pytest

from conftest import CATALOG_CASES, catalog
from rbl.catalog import (MIN_RESOLUTION, build_catalog_surface, closed_form, describe,
                         list_families)
from rbl.errors import InvalidInputError, RBLError
from rbl.surface import eigen_decomposition, random_band_limited

ROUND = [("euclidean_ball", {"r": 1.3}), ("euclidean_ball", {"dim": 2, "r": 0.7}),
         ("spherical_cap", {"r0": 1.0}), ("spherical_cap", {"r0": 0.8, "k": 2.0}),
         ("spherical_cap", {"r0": 0.6, "dim": 2}), ("hyperbolic_ball", {"r0": 1.0}),
         ("hyperbolic_ball", {"r0": 0.5, "k": 3.0}), ("spherical_tube_domain", {"rho": 0.5})]


def test_family_list():
    assert list_families() == sorted(["euclidean_ball", "euclidean_ellipsoid", "spherical_cap",
                                      "spherical_tube_domain", "hyperbolic_ball",
                                      "curve_domain_2d"])


@pytest.mark.parametrize("name,params", ROUND)
def test_area_and_mean_curvature_against_closed_form(name, params):
    s, _ = catalog(name, **params)
    ref = closed_form(name, params)
    assert s.area == pytest.approx(ref["area"], rel=1e-10)
    h_ref = float(ref["H"].split("=")[-1])
    assert np.allclose(s.H, h_ref, rtol=1e-9)


@pytest.mark.parametrize("name,params", ROUND)
def test_first_eigenvalue_against_closed_form(name, params):
    s, _ = catalog(name, **params)
    vals, _ = s.eigen_decomposition(4)
    assert vals[0] == 0.0
    assert vals[1] == pytest.approx(closed_form(name, params)["lambda1"], rel=1e-8)


@pytest.mark.parametrize("name,params", CATALOG_CASES)
def test_model_membership_and_normals(name, params):
    s, _ = catalog(name, **params)
    if s.space.kind != "euclidean":
        assert np.max(s.space.on_model_residual(s.X)) < 1e-12
    assert np.allclose(s.space.inner(s.nu, s.nu), 1.0)
    # normal is orthogonal to the tangents and to the position (curved models)
    assert np.max(np.abs(np.einsum("nik,k,nk->ni", s.T, s.space.signature, s.nu))) < 1e-10
    assert s.H.min() > 0


def test_coordinate_laplacian_on_unit_sphere():
    s, _ = catalog("euclidean_ball")
    for i in range(3):
        assert np.allclose(s.laplacian(s.X[:, i]), -2 * s.X[:, i], atol=1e-10)


def test_ellipsoid_principal_curvatures():
    a, b, c = 1.5, 1.0, 0.7
    s, _ = catalog("euclidean_ellipsoid", a=a, b=b, c=c)
    kappa = s.principal_curvatures()
    # Gauss-Bonnet, and the closed-form Gauss curvature 1 / (a b c)^2 / |x / a^2|^4
    assert s.integrate(kappa[:, 0] * kappa[:, 1]) == pytest.approx(4 * np.pi, rel=1e-8)
    q = np.sum((s.X / np.array([a, b, c]) ** 2) ** 2, axis=1)
    assert np.allclose(kappa[:, 0] * kappa[:, 1], 1 / (a * b * c) ** 2 / q**2, rtol=1e-8)


def test_rebuild_and_resolution_validation():
    s, _ = catalog("spherical_cap", r0=1.0)
    t = s.rebuild(16)
    assert t.resolution == 16 and t.params == s.params
    with pytest.raises(InvalidInputError):
        build_catalog_surface("spherical_cap", None, MIN_RESOLUTION - 1)


@pytest.mark.parametrize("name,params", [
    ("euclidean_ball", {"r": -1.0}),
    ("euclidean_ball", {"radius": 1.0}),
    ("spherical_cap", {"r0": 3.5}),
    ("nope", {}),
])
def test_invalid_parameters(name, params):
    with pytest.raises(RBLError):
        build_catalog_surface(name, params, 16)


def test_describe():
    text = describe("hyperbolic_ball")
    assert "hyperbolic_ball" in text and "spectrum" in text
    with pytest.raises(InvalidInputError):
        describe("torus")


def test_eigen_decomposition_wrapper_and_band_limited_fields(rng):
    s, _ = catalog("euclidean_ball")
    pairs = eigen_decomposition(s, 4)
    assert [round(v, 8) for v, _ in pairs] == [0.0, 2.0, 2.0, 2.0]
    f = random_band_limited(s, rng)
    # a combination of the first 16 eigenfunctions has l <= 3
    assert s.dirichlet_energy(f) <= 12 * s.integrate(f * f) + 1e-8


def test_eigen_request_beyond_rank():
    s, _ = catalog("euclidean_ball", resolution=16)
    with pytest.raises(InvalidInputError):
        s.eigen_decomposition(10**6)
