import numpy as np
import pytest

from rbl.errors import DegenerateBasisError, InvalidInputError
from rbl.spaceform import (SpaceForm, SupportFunction, ambient_inner, hessian_residual,
                           hyperboloid_to_poincare_ball, lorentz_boost, minkowski_inner,
                           poincare_ball_to_hyperboloid, project, random_lorentz, random_rotation,
                           support_gradient)

SPACES = [SpaceForm.euclidean(3), SpaceForm.sphere(3, 1.0), SpaceForm.sphere(2, 2.5),
          SpaceForm.hyperbolic(3, 1.0), SpaceForm.hyperbolic(2, 0.5)]


def test_constructor_validation():
    with pytest.raises(InvalidInputError):
        SpaceForm("flat", 0.0, 3)
    with pytest.raises(InvalidInputError):
        SpaceForm("spherical", -1.0, 3)
    with pytest.raises(InvalidInputError):
        SpaceForm("hyperbolic", 1.0, 3)
    with pytest.raises(InvalidInputError):
        SpaceForm("euclidean", 0.5, 3)
    assert SpaceForm.hyperbolic(3, 2.0).curvature == -2.0
    assert SpaceForm.hyperbolic(3, 2.0).k == 2.0


@pytest.mark.parametrize("space", SPACES, ids=lambda s: f"{s.kind}{s.ambient_dim}")
def test_random_points_on_model(space, rng):
    x = space.random_points(rng, 50)
    assert x.shape == (50, space.coord_dim)
    assert space.contains(x, rtol=1e-10)


def test_minkowski_product():
    u = np.array([2.0, 1.0, 0.0])
    assert minkowski_inner(u, u) == pytest.approx(-3.0)
    H = SpaceForm.hyperbolic(2)
    assert ambient_inner(H, u, u) == pytest.approx(-3.0)
    with pytest.raises(InvalidInputError):
        ambient_inner(H, u, np.ones(4))


@pytest.mark.parametrize("space", SPACES, ids=lambda s: f"{s.kind}{s.ambient_dim}")
def test_chart_round_trip_and_conformal_factor(space, rng):
    y = rng.uniform(-0.3, 0.3, size=(20, space.ambient_dim))
    x = space.chart_to_model(y)
    assert space.contains(x, rtol=1e-10)
    assert np.allclose(space.model_to_chart(x), y, atol=1e-12)
    # pulled back metric is exp(2w) |dy|^2
    w, _ = space.conformal_log_factor(y)
    v = rng.normal(size=y.shape)
    h = 1e-6
    dx = (space.chart_to_model(y + h * v) - space.chart_to_model(y - h * v)) / (2 * h)
    assert np.allclose(space.inner(dx, dx), np.exp(2 * w) * np.sum(v * v, axis=1), rtol=1e-6)


def test_poincare_helpers():
    y = np.array([[0.2, -0.1, 0.4]])
    x = poincare_ball_to_hyperboloid(y)
    assert np.allclose(hyperboloid_to_poincare_ball(x), y)
    with pytest.raises(InvalidInputError):
        poincare_ball_to_hyperboloid(np.array([[1.0, 0.0, 0.0]]))


@pytest.mark.parametrize("space", SPACES[1:], ids=lambda s: f"{s.kind}{s.ambient_dim}")
def test_geodesics_stay_on_model_with_unit_speed(space, rng):
    x = space.random_points(rng, 10)
    v = space.random_tangent(rng, x)
    v /= np.sqrt(space.inner(v, v))[:, None]
    for s in (0.1, 0.7, 2.0):
        p = space.geodesic(x, v, s)
        assert space.contains(p, rtol=1e-10)
    h = 1e-6
    vel = (space.geodesic(x, v, 0.5 + h) - space.geodesic(x, v, 0.5 - h)) / (2 * h)
    assert np.allclose(space.inner(vel, vel), 1.0, atol=1e-6)


@pytest.mark.parametrize("space", SPACES, ids=lambda s: f"{s.kind}{s.ambient_dim}")
def test_support_function_hessian(space, rng):
    # Hess F = -c F g on every model
    alpha = space.random_points(rng, 1)[0]
    F = SupportFunction(alpha, space)
    x = space.random_points(rng, 8, spread=1.0)
    v = space.random_tangent(rng, x)
    w = space.random_tangent(rng, x)
    res = hessian_residual(F, x, v, w)
    assert np.max(np.abs(res)) < 1e-5


def test_support_gradient_is_tangent(rng):
    for space in SPACES[1:]:
        alpha = space.origin()
        F = SupportFunction(alpha, space)
        x = space.random_points(rng, 10, spread=1.0)
        g = support_gradient(F, x)
        assert np.allclose(space.inner(g, x), 0.0, atol=1e-10)


def test_support_function_rejects_off_model_alpha():
    with pytest.raises(InvalidInputError):
        SupportFunction(np.array([1.0, 1.0, 0.0, 0.0]), SpaceForm.sphere(3))
    with pytest.raises(InvalidInputError):
        SupportFunction(np.array([1.0, 0.0]), SpaceForm.sphere(3))


def test_hessian_residual_rejects_non_tangent():
    S = SpaceForm.sphere(2)
    F = SupportFunction(np.array([0.0, 0.0, 1.0]), S)
    x = np.array([0.0, 0.0, 1.0])
    with pytest.raises(InvalidInputError):
        hessian_residual(F, x, np.array([0.0, 0.0, 1.0]), np.array([1.0, 0.0, 0.0]))


def test_project_splits_vector(rng):
    H = SpaceForm.hyperbolic(3)
    x = H.random_points(rng, 1)[0]
    B = np.stack([H.random_tangent(rng, x) for _ in range(2)])
    v = rng.normal(size=4)
    tang, norm = project(H, x, v, B)
    assert np.allclose(tang + norm, v)
    assert np.allclose(ambient_inner(H, B, norm), 0.0, atol=1e-10)
    with pytest.raises(DegenerateBasisError):
        project(H, x, v, np.stack([B[0], B[0]]))


def test_isometry_groups(rng):
    R = random_rotation(rng, 4)
    assert np.allclose(R.T @ R, np.eye(4)) and np.linalg.det(R) > 0
    L = random_lorentz(rng, 4)
    G = np.diag([-1.0, 1, 1, 1])
    assert np.allclose(L.T @ G @ L, G) and L[0, 0] > 0
    B = lorentz_boost(4, 0.3, axis=2)
    assert np.allclose(B.T @ G @ B, G)
