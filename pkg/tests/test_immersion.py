import numpy as np
import pytest

from conftest import catalog
from rbl.errors import InconsistentImmersionError, InvalidInputError
from rbl.immersion import (boosted, euclidean_check, from_coordinates, hyperbolic_check,
                           hyperbolic_support_identities, immersion_mean_curvature,
                           isometry_defect, sphere_support_identities, spherical_check,
                           spherical_decomposition)
from rbl.spaceform import SpaceForm, random_lorentz, random_rotation


def test_inclusion_mean_curvature_two_ways():
    for name, params in [("euclidean_ellipsoid", dict(a=1.5, c=0.7)), ("spherical_cap", {}),
                         ("hyperbolic_ball", {})]:
        s, imm = catalog(name, resolution=64, **params)
        mc = immersion_mean_curvature(s, imm)
        assert mc["discrepancy"] < 1e-8
        assert np.allclose(np.sqrt(np.abs(imm.target.inner(mc["trace"], mc["trace"]))), s.H,
                           rtol=1e-8)


def test_euclidean_equality_for_inclusions():
    s, imm = catalog("euclidean_ellipsoid", a=1.5, b=1.0, c=0.7)
    r = euclidean_check(s, imm)
    assert r.verdict == "equality" and r.equality_flag
    assert r.extras["pointwise_alignment"] < 1e-8


def test_euclidean_strict_for_cap_boundary_in_r4():
    # the boundary sphere of a cap of S^3 seen in R^4: |H_0|^2 = 4 / sin^2 r0
    r0 = 1.0
    s, _ = catalog("spherical_cap", r0=r0)
    imm = from_coordinates(s, SpaceForm.euclidean(4), s.X)
    r = euclidean_check(s, imm)
    assert r.margin == pytest.approx(2 * s.area * np.tan(r0), rel=1e-8)
    assert r.verdict == "pass"
    # padding the target and rotating it change nothing
    big = imm.padded(SpaceForm.euclidean(6))
    R = random_rotation(np.random.default_rng(5), 6)
    r2 = euclidean_check(s, big.transformed(R))
    assert r2.margin == pytest.approx(r.margin, rel=1e-10)


@pytest.mark.parametrize("r0", [np.pi / 6, 1.0, 1.4])
def test_spherical_margin_closed_form(r0):
    s, imm = catalog("spherical_cap", r0=r0)
    r = spherical_check(s, imm)
    assert r.margin == pytest.approx(s.area * np.tan(r0) / 2, rel=1e-10)
    assert r.verdict == "pass" and r.strict_expected
    dec = spherical_decomposition(s, imm)
    assert np.max(np.abs(dec["hx_residual"])) < 1e-8
    assert np.max(dec["tangential"]) < 1e-8


@pytest.mark.parametrize("r0", [0.5, 1.5])
def test_hyperbolic_margin_and_boost_invariance(r0):
    s, imm = catalog("hyperbolic_ball", r0=r0)
    r = hyperbolic_check(s, imm)
    oracle = s.area * np.sinh(r0) ** 2 * np.tanh(r0) / 2
    assert r.margin == pytest.approx(oracle, rel=1e-9)
    assert r.extras["bracket_min"] >= -1e-8
    assert r.extras["pointwise_sum_residual"] < 1e-8
    assert r.extras["curvature_sum_residual"] < 1e-8
    for rapidity in (0.3, 1.2):
        b, tau = boosted(imm, rapidity, axis=2)
        rb = hyperbolic_check(s, b, time_axis=tau)
        for key in ("lhs", "rhs", "margin"):
            assert getattr(rb, key) == pytest.approx(getattr(r, key), rel=1e-9)


def test_hyperbolic_off_centre_time_axis_changes_t_term():
    s, imm = catalog("hyperbolic_ball", r0=1.0)
    L = random_lorentz(np.random.default_rng(2), 4)
    moved = imm.transformed(L)
    r = hyperbolic_check(s, moved)
    assert abs(r.extras["t_term"]) > 1e-3
    assert r.verdict == "pass"
    dropped = hyperbolic_check(s, moved, drop_t_term=True)
    assert dropped.lhs == pytest.approx(r.lhs - r.extras["t_term"], rel=1e-12)


def test_kind_and_curvature_mismatch():
    s, imm = catalog("spherical_cap")
    with pytest.raises(InvalidInputError):
        euclidean_check(s, imm)
    with pytest.raises(InvalidInputError):
        spherical_check(s, imm, k=2.0)
    with pytest.raises(InvalidInputError):
        hyperbolic_check(s, imm)


def test_coordinate_table_validation():
    s, _ = catalog("euclidean_ball")
    with pytest.raises(InconsistentImmersionError):
        from_coordinates(s, SpaceForm.euclidean(3), s.X[:-1])
    with pytest.raises(InconsistentImmersionError):
        from_coordinates(s, SpaceForm.sphere(3), np.hstack([s.X, np.ones((s.n_nodes, 1))]))
    stretched = from_coordinates(s, SpaceForm.euclidean(3), 2 * s.X)
    assert isometry_defect(stretched) == pytest.approx(3.0, rel=1e-8)
    with pytest.raises(InconsistentImmersionError):
        euclidean_check(s, stretched)


def test_transform_requires_isometry():
    s, imm = catalog("hyperbolic_ball")
    with pytest.raises(InvalidInputError):
        imm.transformed(2 * np.eye(4))
    flip = np.diag([-1.0, 1, 1, 1])
    with pytest.raises(InvalidInputError):
        imm.transformed(flip)


def test_support_identities_sphere_and_hyperboloid(rng):
    s, imm = catalog("spherical_cap", r0=1.0)
    for _ in range(3):
        a = rng.normal(size=4)
        res = sphere_support_identities(s, imm, a / np.linalg.norm(a))
        assert max(np.max(np.abs(res[k])) for k in ("i", "ii", "iii")) < 1e-8
    s, imm = catalog("hyperbolic_ball", r0=1.0)
    H = SpaceForm.hyperbolic(3)
    for a in H.random_points(rng, 3):
        res = hyperbolic_support_identities(s, imm, a)
        assert max(np.max(np.abs(res[k])) for k in ("i", "ii", "iii")) < 1e-8


def test_support_identities_need_unit_curvature():
    s, imm = catalog("spherical_cap", r0=0.8, k=2.0)
    with pytest.raises(InvalidInputError):
        sphere_support_identities(s, imm, np.array([0, 0, 0, 1 / np.sqrt(2)]))
