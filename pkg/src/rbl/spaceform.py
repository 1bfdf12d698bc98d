"""Model space forms and the support functions living on them.

Three ambients are supported:

* ``euclidean``  -- R^m with the dot product, curvature 0.
* ``spherical``  -- S^m_k, the sphere of radius 1/sqrt(k) centred at the origin of
  R^{m+1}, curvature +k.
* ``hyperbolic`` -- H^m_{-k}, the upper sheet of <x, x> = -1/k in Minkowski space
  R^{m,1} with signature (-, +, ..., +) and the time coordinate first,
  curvature -k.

All functions broadcast over leading axes: a "vector" is the last axis.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateBasisError, InvalidInputError

KINDS = ("euclidean", "spherical", "hyperbolic")

MODEL_RTOL = 1e-12
TANGENT_TOL = 1e-10
FD_STEP = 1e-4


@dataclass(frozen=True)
class SpaceForm:
    kind: str
    curvature: float
    ambient_dim: int

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown space form kind {self.kind!r}")
        if self.ambient_dim < 1:
            raise InvalidInputError("ambient_dim must be positive")
        c = float(self.curvature)
        if self.kind == "euclidean" and c != 0.0:
            raise InvalidInputError("euclidean space form requires curvature 0")
        if self.kind == "spherical" and not c > 0:
            raise InvalidInputError("spherical space form requires curvature > 0")
        if self.kind == "hyperbolic" and not c < 0:
            raise InvalidInputError("hyperbolic space form requires curvature < 0")

    @classmethod
    def euclidean(cls, m):
        return cls("euclidean", 0.0, m)

    @classmethod
    def sphere(cls, m, k=1.0):
        return cls("spherical", float(k), m)

    @classmethod
    def hyperbolic(cls, m, k=1.0):
        """H^m_{-k}; ``k`` is the positive magnitude of the curvature."""
        return cls("hyperbolic", -float(k), m)

    @property
    def k(self):
        """Magnitude of the sectional curvature."""
        return abs(self.curvature)

    @property
    def coord_dim(self):
        return self.ambient_dim if self.kind == "euclidean" else self.ambient_dim + 1

    @property
    def signature(self):
        sig = np.ones(self.coord_dim)
        if self.kind == "hyperbolic":
            sig[0] = -1.0
        return sig

    def gram_matrix(self):
        return np.diag(self.signature)

    def inner(self, u, v):
        return ambient_inner(self, u, v)

    def quadric_value(self):
        """Value of <x, x> on the model (None for euclidean space)."""
        if self.kind == "euclidean":
            return None
        return 1.0 / self.curvature

    def on_model_residual(self, x):
        """Relative violation of the defining quadric (0 for euclidean space)."""
        x = np.asarray(x, dtype=float)
        if self.kind == "euclidean":
            return np.zeros(x.shape[:-1])
        target = self.quadric_value()
        scale = np.maximum(abs(target), np.sum(x * x, axis=-1))
        return np.abs(self.inner(x, x) - target) / scale

    def contains(self, x, rtol=MODEL_RTOL):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.coord_dim:
            return False
        ok = np.all(self.on_model_residual(x) <= rtol)
        if self.kind == "hyperbolic":
            ok = ok and bool(np.all(x[..., 0] > 0))
        return bool(ok)

    def require_on_model(self, x, rtol=MODEL_RTOL, what="point"):
        if not self.contains(x, rtol):
            raise InvalidInputError(f"{what} is not on the {self.kind} model")

    def origin(self):
        """Base point: origin (euclidean), last axis pole (sphere), e_0 apex (hyperboloid)."""
        p = np.zeros(self.coord_dim)
        if self.kind == "spherical":
            p[-1] = 1.0 / np.sqrt(self.k)
        elif self.kind == "hyperbolic":
            p[0] = 1.0 / np.sqrt(self.k)
        return p

    def random_points(self, rng, count, spread=1.5):
        """Points on the model; hyperboloid points have geodesic distance <= spread from apex."""
        if self.kind == "euclidean":
            return rng.normal(size=(count, self.coord_dim))
        if self.kind == "spherical":
            x = rng.normal(size=(count, self.coord_dim))
            return x / np.linalg.norm(x, axis=-1, keepdims=True) / np.sqrt(self.k)
        d = rng.normal(size=(count, self.ambient_dim))
        d /= np.linalg.norm(d, axis=-1, keepdims=True)
        r = spread * rng.uniform(size=(count, 1))
        sk = np.sqrt(self.k)
        return np.hstack([np.cosh(sk * r), np.sinh(sk * r) * d]) / sk

    def random_tangent(self, rng, x):
        """A random tangent vector at each point of ``x``."""
        v = rng.normal(size=np.shape(x))
        if self.kind == "euclidean":
            return v
        return v - (self.inner(v, x) / self.inner(x, x))[..., None] * x

    def geodesic(self, x, v, s):
        """Point at parameter ``s`` along the geodesic through ``x`` with velocity ``v``."""
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        if self.kind == "euclidean":
            return x + s * v
        speed = np.sqrt(np.maximum(self.inner(v, v), 0.0))
        sk = np.sqrt(self.k)
        a = sk * speed * s
        if np.all(speed == 0):
            return x.copy()
        safe = np.where(speed > 0, speed, 1.0)
        if self.kind == "spherical":
            c, sn = np.cos(a), np.sin(a)
        else:
            c, sn = np.cosh(a), np.sinh(a)
        scale = np.where(speed > 0, sn / (sk * safe), s)
        return c[..., None] * x + scale[..., None] * v

    # Conformal (stereographic / Poincare ball) chart used by the volume meshes.

    def chart_to_model(self, y):
        """Map conformal chart coordinates to model coordinates.

        The chart is the identity for euclidean space, stereographic projection from
        the antipode of the pole for the sphere, and the Poincare ball for the
        hyperboloid. The pulled-back metric is ``exp(2 w) |dy|^2`` with
        ``exp(w) = 2 / (1 + c |y|^2)`` for curvature ``c != 0``.
        """
        y = np.asarray(y, dtype=float)
        if self.kind == "euclidean":
            return y.copy()
        k = self.k
        s = k * np.sum(y * y, axis=-1)
        sk = np.sqrt(k)
        if self.kind == "spherical":
            return np.concatenate(
                [2 * y / (1 + s)[..., None], ((1 - s) / (1 + s) / sk)[..., None]], axis=-1)
        if np.any(s >= 1):
            raise InvalidInputError("point outside the Poincare ball")
        return np.concatenate(
            [((1 + s) / (1 - s) / sk)[..., None], 2 * y / (1 - s)[..., None]], axis=-1)

    def model_to_chart(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "euclidean":
            return x.copy()
        sk = np.sqrt(self.k)
        if self.kind == "spherical":
            return x[..., :-1] / (1 + sk * x[..., -1])[..., None]
        return x[..., 1:] / (1 + sk * x[..., 0])[..., None]

    def conformal_log_factor(self, y):
        """w(y) with metric exp(2w)|dy|^2 in the conformal chart, and its gradient."""
        y = np.asarray(y, dtype=float)
        if self.kind == "euclidean":
            return np.zeros(y.shape[:-1]), np.zeros_like(y)
        c = self.curvature
        s = c * np.sum(y * y, axis=-1)
        w = np.log(2.0 / (1.0 + s))
        grad = -2 * c * y / (1.0 + s)[..., None]
        return w, grad

    def chart_radius(self, r):
        """Chart radius of a geodesic ball of radius ``r`` centred at the chart origin."""
        if self.kind == "euclidean":
            return r
        sk = np.sqrt(self.k)
        if self.kind == "spherical":
            return np.tan(sk * r / 2) / sk
        return np.tanh(sk * r / 2) / sk


def _check_dims(space, *vecs):
    for v in vecs:
        if np.shape(v)[-1:] != (space.coord_dim,):
            raise InvalidInputError(
                f"vector of length {np.shape(v)[-1:]} does not match coordinate "
                f"dimension {space.coord_dim}")


def ambient_inner(space, u, v):
    """Euclidean product for euclidean/spherical models, Minkowski product for hyperbolic."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    _check_dims(space, u, v)
    out = np.sum(u * v, axis=-1)
    if space.kind == "hyperbolic":
        out = out - 2 * u[..., 0] * v[..., 0]
    return out


def minkowski_inner(u, v):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return np.sum(u * v, axis=-1) - 2 * u[..., 0] * v[..., 0]


@dataclass(frozen=True)
class SupportFunction:
    """F(x) = <alpha, x> restricted to the model."""

    alpha: np.ndarray
    space: SpaceForm

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        _check_dims(self.space, alpha)
        if self.space.kind != "euclidean":
            self.space.require_on_model(alpha, rtol=1e-10, what="alpha")
        object.__setattr__(self, "alpha", alpha)

    def __call__(self, x):
        return ambient_inner(self.space, self.alpha, x)


def support_eval(F, x):
    F.space.require_on_model(x, rtol=1e-10)
    return F(x)


def support_gradient(F, x):
    """Model gradient of F: alpha - k<alpha,x>x (sphere), alpha + k<alpha,x>x (hyperboloid)."""
    space = F.space
    x = np.asarray(x, dtype=float)
    _check_dims(space, x)
    if space.kind == "euclidean":
        return np.broadcast_to(F.alpha, x.shape).copy()
    return F.alpha - space.curvature * F(x)[..., None] * x


def _geodesic_second_derivative(F, x, v, h):
    space = F.space
    fp = F(space.geodesic(x, v, h))
    fm = F(space.geodesic(x, v, -h))
    return (fp - 2 * F(x) + fm) / h**2


def hessian_residual(F, x, v, w, h=FD_STEP):
    """Hess F(v, w) + c F <v, w> evaluated by central differences along geodesics.

    ``c`` is the signed curvature, so the exact value is zero on every model. The
    Hessian is polarised from second derivatives of F along the geodesics with
    velocities v + w, v and w.
    """
    space = F.space
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    _check_dims(space, x, v, w)
    if space.kind != "euclidean":
        scale = np.sqrt(abs(space.inner(x, x)))
        for vec, name in ((v, "v"), (w, "w")):
            norm = np.sqrt(np.sum(vec * vec, axis=-1))
            if np.any(np.abs(space.inner(vec, x)) > TANGENT_TOL * np.maximum(norm, 1.0) * scale):
                raise InvalidInputError(f"{name} is not tangent to the model at x")
    if not np.any(v) and not np.any(w):
        return np.zeros(np.shape(x)[:-1])
    d_sum = _geodesic_second_derivative(F, x, v + w, h)
    d_v = _geodesic_second_derivative(F, x, v, h)
    d_w = _geodesic_second_derivative(F, x, w, h)
    hess = 0.5 * (d_sum - d_v - d_w)
    return hess + space.curvature * F(x) * space.inner(v, w)


def project(space, x, v, tangent_basis):
    """Split ``v`` into its part in span(tangent_basis) and the ambient-orthogonal rest.

    Returns ``(tangential, normal)`` with ``v = tangential + normal``. ``tangent_basis``
    has shape (..., d, D). Raises DegenerateBasisError when the Gram matrix condition
    number exceeds 1e12.
    """
    v = np.asarray(v, dtype=float)
    B = np.asarray(tangent_basis, dtype=float)
    _check_dims(space, v, B)
    gram = gram_matrices(space, B)
    if np.any(np.linalg.cond(gram) > 1e12):
        raise DegenerateBasisError("tangent basis Gram matrix is singular or ill-conditioned")
    rhs = ambient_inner(space, B, v[..., None, :])
    coef = np.linalg.solve(gram, rhs[..., None])[..., 0]
    tangential = np.einsum("...i,...ij->...j", coef, B)
    return tangential, v - tangential


def gram_matrices(space, B):
    """Gram matrices <B_i, B_j> for bases of shape (..., d, D)."""
    sig = space.signature
    return np.einsum("...ik,k,...jk->...ij", B, sig, B)


def lorentz_boost(dim, rapidity, axis=1):
    """Boost of R^{dim-1,1} mixing the time axis with spatial ``axis``."""
    L = np.eye(dim)
    c, s = np.cosh(rapidity), np.sinh(rapidity)
    L[0, 0] = L[axis, axis] = c
    L[0, axis] = L[axis, 0] = s
    return L


def random_rotation(rng, dim):
    """Haar-random special orthogonal matrix."""
    q, r = np.linalg.qr(rng.normal(size=(dim, dim)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_lorentz(rng, dim, max_rapidity=1.0):
    """Restricted Lorentz transformation: spatial rotation composed with a boost."""
    R = np.eye(dim)
    R[1:, 1:] = random_rotation(rng, dim - 1)
    return lorentz_boost(dim, rng.uniform(-max_rapidity, max_rapidity)) @ R


def poincare_ball_to_hyperboloid(y, k=1.0):
    return SpaceForm.hyperbolic(np.shape(y)[-1], k).chart_to_model(y)


def hyperboloid_to_poincare_ball(x, k=1.0):
    return SpaceForm.hyperbolic(np.shape(x)[-1] - 1, k).model_to_chart(x)
