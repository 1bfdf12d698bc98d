import os
import shutil
from functools import lru_cache

import numpy as np
import pytest

from rbl.errors import (InconsistentMeshError, InvalidInputError, NearResonanceError,
                        UnsupportedGeometryError)
from rbl.fem import (ReferenceElement, build_volume_mesh, cube_to_ball, dirichlet_lambda1,
                     load_template, parse_template, phi_boundary_max_probe, reilly_residual,
                     simplex_quadrature, solve_helmholtz_dirichlet, structured_cube,
                     support_boundary_residuals)
from rbl.runner import spatial
from rbl.spaceform import SpaceForm


@lru_cache(maxsize=None)
def mesh(family, cells=4, degree=3, **params):
    return build_volume_mesh(family, params or None, cells, degree)


@pytest.mark.parametrize("dim", [2, 3])
@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_simplex_quadrature_exactness(dim, m):
    bary, w = simplex_quadrature(dim, m)
    assert w.sum() == pytest.approx(1.0)
    # int over the reference simplex of lambda_1^a, normalised by its volume: a! d! / (a + d)!
    from math import factorial
    for a in range(2 * m):
        exact = factorial(a) * factorial(dim) / factorial(a + dim)
        assert np.sum(w * bary[:, 1] ** a) == pytest.approx(exact, rel=1e-12)


@pytest.mark.parametrize("dim", [2, 3])
@pytest.mark.parametrize("degree", [1, 2, 3])
def test_reference_element_interpolation(dim, degree, rng):
    ref = ReferenceElement(dim, degree)
    N, dN = ref.shape(ref.node_bary)
    assert np.allclose(N, np.eye(ref.n_local), atol=1e-12)
    bary = rng.dirichlet(np.ones(dim + 1), size=5)
    N, dN = ref.shape(bary)
    assert np.allclose(N.sum(axis=1), 1.0)
    assert np.allclose(dN.sum(axis=1), 0.0)
    # a polynomial of the element degree is reproduced with its derivatives
    xi = ref.node_bary[:, 1:]
    f = lambda x: x[:, 0] ** degree + (x[:, -1] if dim > 1 else 0)
    q = bary[:, 1:]
    assert np.allclose(N @ f(xi), f(q), atol=1e-12)
    d2 = ref.second(bary)
    expect = degree * (degree - 1) * q[:, 0] ** max(degree - 2, 0)
    assert np.allclose(np.einsum("qn,n->q", d2[..., 0, 0], f(xi)), expect, atol=1e-9)


def test_templates_and_structured_cube():
    for dim in (2, 3):
        v, e = load_template(dim)
        assert v.shape[1] == dim and e.shape[1] == dim + 1
    pts, elems = structured_cube(3, 4)
    assert len(pts) == 125 and len(elems) == 6 * 64
    B = np.swapaxes(pts[elems][:, 1:] - pts[elems][:, :1], 1, 2)
    vol = np.abs(np.linalg.det(B)).sum() / 6
    assert vol == pytest.approx(8.0)
    assert np.all(np.linalg.det(B) > 0)
    with pytest.raises(InvalidInputError):
        structured_cube(3, 3)


def test_template_parser_errors():
    with pytest.raises(InconsistentMeshError):
        parse_template("dim 2\nvertices 1\n0 0\n")
    with pytest.raises(InconsistentMeshError):
        parse_template("dim 2\nvertices 1\n0 0\nelements 1\n0 1 2\n")


def test_data_dir_override(tmp_path, monkeypatch):
    (tmp_path / "templates").mkdir()
    src = os.path.join(os.path.dirname(__import__("rbl").__file__), "data", "templates")
    for name in os.listdir(src):
        shutil.copy(os.path.join(src, name), tmp_path / "templates" / name)
    monkeypatch.setenv("RBL_DATA_DIR", str(tmp_path))
    assert load_template(2)[1].shape == (2, 3)
    (tmp_path / "templates" / "square_kuhn_v1.txt").write_text("garbage\n")
    with pytest.raises(InconsistentMeshError):
        load_template(2)


def test_cube_to_ball():
    pts, _ = structured_cube(3, 6)
    b = cube_to_ball(pts)
    r = np.max(np.abs(pts), axis=1)
    assert np.all(np.isfinite(b))
    assert np.allclose(np.linalg.norm(b[r == 1], axis=1), 1.0)
    assert np.all(np.linalg.norm(b, axis=1) <= 1 + 1e-12)


@pytest.mark.parametrize("family,params,exact", [
    ("euclidean_ball", {}, 4 * np.pi / 3),
    ("euclidean_ball", {"dim": 2, "r": 2.0}, 4 * np.pi),
    ("euclidean_ellipsoid", {"a": 1.5, "b": 1.0, "c": 0.7}, 4 * np.pi / 3 * 1.05),
    ("spherical_cap", {"r0": 1.0}, np.pi * (2.0 - np.sin(2.0))),
    ("hyperbolic_ball", {"r0": 1.0}, np.pi * (np.sinh(2.0) - 2.0)),
])
def test_mesh_volume(family, params, exact):
    m = mesh(family, **params)
    assert m.volume == pytest.approx(exact, rel=2e-4)
    assert m.space.contains(m.boundary_surface.X, rtol=1e-10) if m.space.kind != "euclidean" else True


def test_lambda1_ball_and_hemisphere():
    assert dirichlet_lambda1(mesh("euclidean_ball", cells=6)) == pytest.approx(np.pi**2, abs=1e-3)
    assert dirichlet_lambda1(mesh("spherical_cap", r0=np.pi / 2)) == pytest.approx(3.0, abs=1e-3)


def test_harmonic_quadratic_is_reproduced():
    m = mesh("euclidean_ball")
    u = solve_helmholtz_dirichlet(m, 0.0, lambda X: X[:, 0] ** 2 - X[:, 1] ** 2)
    Y = m.nodes
    assert np.max(np.abs(u.values - (Y[:, 0] ** 2 - Y[:, 1] ** 2))) < 1e-3


def test_support_function_extension_on_cap():
    # lap F + 3 F = 0 on S^3: the Helmholtz extension of F restricted to the boundary is F
    m = mesh("spherical_cap", r0=1.0, cells=6)
    alpha = np.array([0.6, 0.0, 0.0, 0.8])
    u = solve_helmholtz_dirichlet(m, 3.0, lambda X: X @ alpha)
    exact = m.model_nodes() @ alpha
    assert np.max(np.abs(u.values - exact)) < 1e-3


def test_resonance_detected_on_hemisphere():
    m = mesh("spherical_cap", r0=np.pi / 2)
    with pytest.raises(NearResonanceError):
        solve_helmholtz_dirichlet(m, dirichlet_lambda1(m), lambda X: X[:, 0])


def test_boundary_data_validation():
    m = mesh("euclidean_ball")
    with pytest.raises(InconsistentMeshError):
        solve_helmholtz_dirichlet(m, 0.0, np.ones(5))
    other = mesh("euclidean_ball", cells=6)
    from rbl.surface import BoundaryFunction
    f = BoundaryFunction(other.boundary_surface, np.ones(other.boundary_surface.n_nodes))
    with pytest.raises(InconsistentMeshError):
        solve_helmholtz_dirichlet(m, 0.0, f)


@pytest.mark.parametrize("family,params", [
    ("euclidean_ball", {}), ("euclidean_ellipsoid", {"a": 1.3, "b": 1.0, "c": 0.8}),
    ("spherical_cap", {"r0": 1.0}), ("hyperbolic_ball", {"r0": 1.0}),
    ("euclidean_ball", {"dim": 2})])
def test_reilly_residual_decreases(family, params):
    res = []
    for cells in (4, 8):
        m = mesh(family, cells=cells, **params)
        u = solve_helmholtz_dirichlet(m, 0.0, lambda X, m=m: (
            spatial(m.space, X)[:, 0] ** 2 - spatial(m.space, X)[:, 1] ** 2))
        res.append(abs(reilly_residual(m, u).relative_residual))
    assert res[1] < 0.75 * res[0]
    assert res[1] < 1e-2


def test_reilly_linear_elements():
    m = mesh("euclidean_ball", cells=8, degree=1)
    u = solve_helmholtz_dirichlet(m, 0.0, lambda X: X[:, 0] ** 2 - X[:, 1] ** 2)
    r = reilly_residual(m, u)
    assert abs(r.relative_residual) < 2e-2
    with pytest.raises(InconsistentMeshError):
        reilly_residual(mesh("euclidean_ball"), u)


def test_phi_probe_variants():
    m = mesh("spherical_cap", r0=1.0, cells=6)
    alpha = np.array([0.0, 0.6, 0.0, 0.8])
    u = solve_helmholtz_dirichlet(m, 3.0, lambda X: X @ alpha)
    r = phi_boundary_max_probe(m, u, "spherical", alpha=alpha)
    assert r.verdict == "pass"
    assert r.boundary_identity_residual < 1e-2
    h = mesh("hyperbolic_ball", r0=1.0, cells=6)
    a = np.array([np.cosh(0.5), np.sinh(0.5), 0, 0])
    v = solve_helmholtz_dirichlet(h, -3.0, lambda X: -SpaceForm.hyperbolic(3).inner(X, a))
    assert phi_boundary_max_probe(h, v, "hyperbolic", alpha=a).verdict == "pass"
    ident, dnu_res = support_boundary_residuals(h, v, a, "hyperbolic")
    assert ident < 1e-2 and dnu_res is None
    e = mesh("euclidean_ball")
    w = solve_helmholtz_dirichlet(e, -2.0, lambda X: X[:, 0])
    assert phi_boundary_max_probe(e, w, "euclidean-lambda").verdict == "pass"
    with pytest.raises(InvalidInputError):
        phi_boundary_max_probe(e, w, "spherical")
    with pytest.raises(InvalidInputError):
        phi_boundary_max_probe(m, u, "bogus")


def test_unsupported_family():
    with pytest.raises(UnsupportedGeometryError):
        build_volume_mesh("spherical_tube_domain", None, 4)
    with pytest.raises(InvalidInputError):
        build_volume_mesh("euclidean_ball", None, 4, degree=4)
