"""Isometric immersions of a boundary surface and total mean curvature checks.

An immersion maps the surface into a target space form (R^m, S^m_k or H^m_{-k})
given in flat model coordinates. Its mean curvature vector is computed twice:
as the trace of the vector valued second fundamental form and as the coordinate
Laplacian ``lap X`` projected to the target (``H_target = lap X - c <lap X, X> X``).
For an inclusion ``H_vec = -H nu``.
"""

from dataclasses import dataclass, field

import numpy as np

from .convergence import TOL_FLOOR, estimate_tolerance, verdict_inequality, verdict_strict
from .errors import (InconsistentImmersionError, InvalidGeometryError, InvalidInputError,
                     UnsupportedGeometryError)
from .spaceform import SpaceForm, SupportFunction, gram_matrices, lorentz_boost
from .surface import MESH_TOL_FACTOR

ISOMETRY_TOL = 1e-8
NORMALITY_TOL = 1e-8
HX_TOL = 1e-6
H_MIN = 1e-8
EPS_H = 1e-8
EPS_POS = 1e-10


@dataclass
class ImmersionData:
    surface: object
    target: SpaceForm
    X: np.ndarray
    dX: np.ndarray
    II_vec: np.ndarray = None
    H_vec: np.ndarray = None
    source: str = "inclusion"
    recipe: object = field(default=None, repr=False)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.X.shape != (self.surface.n_nodes, self.target.coord_dim):
            raise InconsistentImmersionError(
                f"immersion coordinates have shape {self.X.shape}, expected "
                f"({self.surface.n_nodes}, {self.target.coord_dim})")
        if self.H_vec is None and self.II_vec is not None:
            self.H_vec = trace_vector_form(self.surface, self.II_vec)

    def transformed(self, L):
        """Compose with an ambient isometry given as a matrix (orthogonal or Lorentz)."""
        L = np.asarray(L, dtype=float)
        G = self.target.gram_matrix()
        if L.shape != G.shape or not np.allclose(L.T @ G @ L, G, atol=1e-10):
            raise InvalidInputError("matrix does not preserve the ambient bilinear form")
        if self.target.kind == "hyperbolic" and L[0, 0] <= 0:
            raise InvalidInputError("Lorentz transformation must preserve the upper sheet")
        recipe = None if self.recipe is None else (lambda s, r=self.recipe: r(s).transformed(L))
        return ImmersionData(self.surface, self.target, self.X @ L.T, self.dX @ L.T,
                             None if self.II_vec is None else self.II_vec @ L.T,
                             None if self.H_vec is None else self.H_vec @ L.T,
                             source=f"{self.source}+transform", recipe=recipe)

    def padded(self, target):
        """Append zero coordinates (totally geodesic enlargement of the target)."""
        extra = target.coord_dim - self.target.coord_dim
        if extra < 0 or target.kind != self.target.kind or target.curvature != self.target.curvature:
            raise InvalidInputError("padding target must be a larger model of the same kind")

        def pad(a):
            return None if a is None else np.concatenate(
                [a, np.zeros(a.shape[:-1] + (extra,))], axis=-1)

        recipe = None if self.recipe is None else (lambda s, r=self.recipe: r(s).padded(target))
        return ImmersionData(self.surface, target, pad(self.X), pad(self.dX), pad(self.II_vec),
                             pad(self.H_vec), source=f"{self.source}+pad", recipe=recipe)


def trace_vector_form(surface, II_vec):
    if surface.representation == "parametric":
        return np.einsum("nij,nijk->nk", surface.gamma_inv, II_vec)
    return np.einsum("naak->nk", II_vec)


def inclusion(surface):
    """Inclusion of the surface into its enclosing space form."""
    if surface.representation == "parametric":
        dX = surface.T
        II = surface.II
    else:
        dX = surface.tangent_frames()
        II = np.einsum("nai,nij,nbj->nab", dX, surface.shape, dX)
    II_vec = -II[..., None] * surface.nu[:, None, None, :]
    return ImmersionData(surface, surface.space, surface.X, dX, II_vec, -surface.H[:, None] * surface.nu,
                         source="inclusion", recipe=inclusion)


def _normal_part(target, X, dX, V):
    """Remove from V (n, ..., D) its components along the immersed tangents and along X."""
    sig = target.signature
    gram = gram_matrices(target, dX)
    ginv = np.linalg.inv(gram)
    extra = V.ndim - 2
    rhs = np.einsum("nak,k,n...k->n...a", dX, sig, V)
    coef = np.einsum("nab,n...b->n...a", ginv, rhs)
    V = V - np.einsum("n...a,nak->n...k", coef, dX)
    if target.kind != "euclidean":
        xx = np.sum(X * sig * X, axis=1)
        c = np.einsum("nk,k,n...k->n...", X, sig, V) / xx.reshape((-1,) + (1,) * extra)
        V = V - c[..., None] * X.reshape((X.shape[0],) + (1,) * extra + (X.shape[1],))
    return V


def from_coordinates(surface, target, coords, source="table"):
    """Immersion given by per-node target coordinates.

    On parametric surfaces tangents and the second fundamental form come from
    spectral derivatives of the table. On meshes only the Laplacian route to the
    mean curvature vector is available.
    """
    coords = np.asarray(coords, dtype=float)
    if coords.shape != (surface.n_nodes, target.coord_dim):
        raise InconsistentImmersionError(
            f"coordinate table has shape {coords.shape}, expected "
            f"({surface.n_nodes}, {target.coord_dim})")
    if target.kind != "euclidean":
        bad = target.on_model_residual(coords) > 1e-10
        if np.any(bad) or (target.kind == "hyperbolic" and np.any(coords[:, 0] <= 0)):
            raise InconsistentImmersionError("immersion does not land on the target model")
    if surface.representation == "parametric":
        dX = surface.partials(coords)
        dd = surface.second_derivatives(coords)
        II_vec = _normal_part(target, coords, dX, dd)
        return ImmersionData(surface, target, coords, dX, II_vec, source=source)
    frames = surface.tangent_frames()
    grads = surface.gradient(coords)
    dX = np.einsum("nai,nik->nak", frames, grads)
    lap = surface.laplacian(coords)
    H_vec = lap - target.curvature * np.sum(lap * target.signature * coords, axis=1)[:, None] * coords
    return ImmersionData(surface, target, coords, dX, None, H_vec, source=source)


def isometry_defect(imm):
    """Max |Gram(dX) - gamma| over nodes (relative to the metric scale)."""
    s = imm.surface
    G = gram_matrices(imm.target, imm.dX)
    ref = s.gamma if s.representation == "parametric" else np.broadcast_to(np.eye(2), G.shape)
    scale = np.max(np.abs(ref), axis=(1, 2))
    return float(np.max(np.max(np.abs(G - ref), axis=(1, 2)) / scale))


def require_isometric(imm, tol=ISOMETRY_TOL):
    if imm.surface.representation != "parametric":
        tol = max(tol, 0.1)
    d = isometry_defect(imm)
    if d > tol:
        raise InconsistentImmersionError(f"immersion is not isometric (defect {d:.3e} > {tol:.1e})")
    return d


def coordinate_laplacian(imm):
    """lap X componentwise in flat model coordinates (H_0 or H_M)."""
    return imm.surface.laplacian(imm.X)


def immersion_mean_curvature(s, imm, tol=None):
    """Mean curvature vector two ways; raises when they disagree beyond ``tol``.

    Returns a dict with ``trace`` (trace of II_vec), ``laplacian`` (lap X projected
    to the target), ``flat`` (the raw coordinate Laplacian) and ``discrepancy``.
    """
    if imm.surface is not s:
        raise InconsistentImmersionError("immersion belongs to a different surface")
    require_isometric(imm)
    flat = coordinate_laplacian(imm)
    c = imm.target.curvature
    proj = flat - c * imm.target.inner(flat, imm.X)[:, None] * imm.X
    trace = imm.H_vec if imm.H_vec is not None else proj
    disc = float(np.max(np.linalg.norm(trace - proj, axis=1)))
    if tol is None:
        scale = max(1.0, float(np.max(np.abs(s.H))))
        tol = 1e-4 * scale if s.representation == "parametric" else np.inf
    if disc > tol:
        raise InconsistentImmersionError(
            f"mean curvature vectors disagree: trace vs laplacian differ by {disc:.3e}")
    return dict(trace=trace, laplacian=proj, flat=flat, discrepancy=disc)


def _curvature_sums(s, imm):
    """Pointwise sum_i II(grad x_i, grad x_i) over the ambient coordinates (signed)."""
    sig = imm.target.signature
    terms = np.stack([s.second_form(imm.X[:, i]) for i in range(imm.X.shape[1])], axis=1)
    return terms, terms @ np.where(sig > 0, 1.0, -1.0)


@dataclass
class TotalMeanCurvatureReport:
    check: str
    lhs: float
    rhs: float
    margin: float
    tol: float
    verdict: str
    strict_expected: bool
    equality_flag: bool
    sigma_prime_fraction: float
    extras: dict = field(default_factory=dict)

    def as_dict(self):
        out = dict(check=self.check, lhs=self.lhs, rhs=self.rhs, margin=self.margin, tol=self.tol,
                   verdict=self.verdict, strict_expected=self.strict_expected,
                   equality_flag=self.equality_flag,
                   sigma_prime_fraction=self.sigma_prime_fraction)
        out.update(self.extras)
        return out


def _tol(evaluate, s, imm):
    """Margin and numerical tolerance from a half-resolution rebuild of surface and immersion."""
    if imm.recipe is None or not s.can_rebuild:
        value = evaluate(s, imm)
        return value, TOL_FLOOR * (1 if s.representation == "parametric" else MESH_TOL_FACTOR), False

    def ev(surf):
        return evaluate(surf, imm if surf is s else imm.recipe(surf))

    value, tol = estimate_tolerance(ev, s)
    return value, tol, True


def _require_kind(imm, kind):
    if imm.target.kind != kind:
        raise InvalidInputError(f"expected an immersion into a {kind} target, got {imm.target.kind}")


def _require_H(s, h_min, where=None):
    H = s.H if where is None else s.H[where]
    if np.any(H < 0):
        raise InvalidGeometryError("mean curvature is negative at some node")
    if np.any(H < h_min):
        raise UnsupportedGeometryError(f"mean curvature below the floor H_min = {h_min:g}")


def _length_scale(s):
    return np.sqrt(s.area) if s.intrinsic_dim == 2 else s.area


def euclidean_check(s, imm, eps_h=None, h_min=H_MIN):
    """Total mean curvature against int_{Sigma'} |H_0|^2 / H for immersions into R^m."""
    _require_kind(imm, "euclidean")
    mc = immersion_mean_curvature(s, imm)
    if np.any(s.H < 0):
        raise InvalidGeometryError("mean curvature is negative at some node")
    eps_h = EPS_H / _length_scale(s) if eps_h is None else eps_h

    def parts(surf, im):
        Hv = im.H_vec if im.H_vec is not None else immersion_mean_curvature(surf, im)["laplacian"]
        norm = np.linalg.norm(Hv, axis=1)
        mask = norm > eps_h
        if np.any(surf.H[mask] < h_min):
            raise UnsupportedGeometryError("H vanishes on the active set where |H_0| > 0")
        integrand = np.where(mask, norm**2 / np.where(mask, surf.H, 1.0), 0.0)
        lhs = surf.integrate(surf.H)
        rhs = surf.integrate(integrand)
        return np.array([rhs - lhs, lhs, rhs]), mask, norm

    def margin(surf, im):
        return parts(surf, im)[0][0]

    m, tol, estimated = _tol(margin, s, imm)
    (_, lhs, rhs), mask, norm = parts(s, imm)
    frac = float(s.integrate(mask.astype(float)) / s.area)
    terms, total = _curvature_sums(s, imm)
    sum_res = float(np.max(np.abs(total - s.H)))
    align = float(np.max(np.abs(norm - s.H)))
    verdict = verdict_inequality(m, tol)
    return TotalMeanCurvatureReport(
        "euclidean_tmc", float(lhs), float(rhs), float(m), float(tol), verdict,
        strict_expected=False, equality_flag=verdict == "equality",
        sigma_prime_fraction=frac,
        extras=dict(sum_identity_residual=sum_res, pointwise_alignment=align,
                    mean_curvature_discrepancy=mc["discrepancy"], tol_estimated=estimated))


def spherical_decomposition(s, imm, tol=HX_TOL):
    """H_S = H_0 - k <H_0, X> X with the identity <H_0, X> + (n-1) = 0 checked."""
    _require_kind(imm, "spherical")
    if np.max(imm.target.on_model_residual(imm.X)) > 1e-10:
        raise InconsistentImmersionError("immersion is off the sphere")
    H0 = coordinate_laplacian(imm)
    k = imm.target.curvature
    hx = np.sum(H0 * imm.X, axis=1)
    HS = H0 - k * hx[:, None] * imm.X
    res = hx + s.intrinsic_dim
    if s.representation == "parametric" and np.max(np.abs(res)) > tol:
        raise InconsistentImmersionError(f"<H_0, X> + (n-1) = {np.max(np.abs(res)):.3e} exceeds {tol:g}")
    tangential = _tangential_norm(imm, HS)
    return dict(H0=H0, HS=HS, hx_residual=res, tangential=tangential)


def _tangential_norm(imm, V):
    sig = imm.target.signature
    gram = gram_matrices(imm.target, imm.dX)
    c = np.linalg.solve(gram, np.einsum("nak,k,nk->na", imm.dX, sig, V)[..., None])[..., 0]
    tang = np.einsum("na,nak->nk", c, imm.dX)
    return np.sqrt(np.abs(np.sum(tang * sig * tang, axis=1)))


def spherical_check(s, imm, k=None, h_min=H_MIN):
    """Strict bound int H < int (|H_S|^2 + (n-1)^2 k / 4) / H."""
    _require_kind(imm, "spherical")
    k = imm.target.curvature if k is None else float(k)
    if abs(k - imm.target.curvature) > 1e-12 * k:
        raise InvalidInputError("k must equal the curvature of the target sphere")
    require_isometric(imm)
    _require_H(s, h_min)
    nm1 = s.intrinsic_dim

    def parts(surf, im):
        _require_H(surf, h_min)
        dec = spherical_decomposition(surf, im)
        hs2 = np.sum(dec["HS"] ** 2, axis=1)
        lhs = surf.integrate(surf.H)
        rhs = surf.integrate((hs2 + nm1**2 * k / 4) / surf.H)
        return np.array([rhs - lhs, lhs, rhs]), dec

    def margin(surf, im):
        return parts(surf, im)[0][0]

    m, tol, estimated = _tol(margin, s, imm)
    (_, lhs, rhs), dec = parts(s, imm)
    verdict = verdict_strict(m, tol)
    return TotalMeanCurvatureReport(
        "spherical_tmc", float(lhs), float(rhs), float(m), float(tol), verdict,
        strict_expected=True, equality_flag=abs(m) <= tol, sigma_prime_fraction=1.0,
        extras=dict(hx_residual=float(np.max(np.abs(dec["hx_residual"]))),
                    tangential_HS=float(np.max(dec["tangential"])), tol_estimated=estimated))


def _boost_to(tau):
    """Pure boost taking e_0 to the unit future timelike vector ``tau``."""
    tau = np.asarray(tau, dtype=float)
    g = tau[0]
    b = tau[1:]
    D = tau.size
    B = np.eye(D)
    B[0, 0] = g
    B[0, 1:] = b
    B[1:, 0] = b
    B[1:, 1:] += np.outer(b, b) / (1 + g)
    return B


def _time_axis(target, time_axis):
    if time_axis is None:
        tau = np.zeros(target.coord_dim)
        tau[0] = 1.0
        return tau
    tau = np.asarray(time_axis, dtype=float)
    if tau.shape != (target.coord_dim,):
        raise InvalidInputError("time axis has the wrong dimension")
    if abs(target.inner(tau, tau) + 1) > 1e-10 or tau[0] <= 0:
        raise InvalidInputError("time axis must be a future unit timelike vector")
    return tau


def hyperbolic_decomposition(s, imm, time_axis=None, tol=HX_TOL):
    """H_H = H_M + k <H_M, X> X, the time coordinate field and the spatial coordinates.

    ``time_axis`` (default e_0) defines t = -<tau, X>; the spatial coordinates are
    taken in the rest frame of tau. Lorentz transforming both the immersion and the
    axis leaves every derived scalar unchanged.
    """
    _require_kind(imm, "hyperbolic")
    if np.any(imm.X[:, 0] <= 0) or np.max(imm.target.on_model_residual(imm.X)) > 1e-10:
        raise InconsistentImmersionError("immersion is off the upper hyperboloid sheet")
    tgt = imm.target
    k = tgt.k
    tau = _time_axis(tgt, time_axis)
    HM = coordinate_laplacian(imm)
    hx = tgt.inner(HM, imm.X)
    HH = HM + k * hx[:, None] * imm.X
    res = hx + s.intrinsic_dim
    if s.representation == "parametric" and np.max(np.abs(res)) > tol:
        raise InconsistentImmersionError(f"<H_M, X> + (n-1) = {np.max(np.abs(res)):.3e} exceeds {tol:g}")
    frame = _boost_to(tau)
    t = -tgt.inner(imm.X, tau)
    lap_t = -tgt.inner(HM, tau)
    spatial = [frame[:, i] for i in range(1, tgt.coord_dim)]
    x = np.stack([tgt.inner(imm.X, e) for e in spatial], axis=1)
    lap_x = np.stack([tgt.inner(HM, e) for e in spatial], axis=1)
    grad_t = s.gradient(t)
    return dict(HM=HM, HH=HH, hx_residual=res, t=t, lap_t=lap_t, grad_t=grad_t,
                x=x, lap_x=lap_x, HH_X=tgt.inner(HH, imm.X),
                tangential=_tangential_norm(imm, HH))


def hyperbolic_check(s, imm, k=None, time_axis=None, drop_t_term=False, eps_pos=EPS_POS,
                     h_min=H_MIN):
    """Strict bound int H + int II(grad t, grad t) < int_{Sigma'_0} bracket / H."""
    _require_kind(imm, "hyperbolic")
    k = imm.target.k if k is None else float(k)
    if abs(k - imm.target.k) > 1e-12 * k:
        raise InvalidInputError("k must equal the curvature magnitude of the target")
    require_isometric(imm)
    nm1 = s.intrinsic_dim

    def parts(surf, im):
        dec = hyperbolic_decomposition(surf, im, time_axis)
        hh2 = im.target.inner(dec["HH"], dec["HH"])
        bracket = hh2 - nm1**2 * k / 4 + (dec["lap_t"] - nm1 * k * dec["t"] / 2) ** 2
        mask = bracket > eps_pos
        _require_H(surf, h_min, mask)
        tterm = surf.integrate(surf.second_form(dec["t"]))
        lhs = surf.integrate(surf.H) + (0.0 if drop_t_term else tterm)
        rhs = surf.integrate(np.where(mask, bracket / np.where(mask, surf.H, 1.0), 0.0))
        return np.array([rhs - lhs, lhs, rhs]), dec, bracket, mask, tterm

    def margin(surf, im):
        return parts(surf, im)[0][0]

    m, tol, estimated = _tol(margin, s, imm)
    (_, lhs, rhs), dec, bracket, mask, tterm = parts(s, imm)
    sos = np.sum((dec["lap_x"] - nm1 * k * dec["x"] / 2) ** 2, axis=1)
    sum_res = float(np.max(np.abs(sos - bracket)))
    # sum_i II(grad x_i, grad x_i) = H + II(grad t, grad t) pointwise
    t_form = s.second_form(dec["t"])
    x_forms = np.sum([s.second_form(dec["x"][:, i]) for i in range(dec["x"].shape[1])], axis=0)
    pisum_res = float(np.max(np.abs(x_forms - s.H - t_form)))
    verdict = verdict_strict(m, tol)
    if bracket.min() < -1e-8:
        verdict = "fail"
    frac = float(s.integrate(mask.astype(float)) / s.area)
    return TotalMeanCurvatureReport(
        "hyperbolic_tmc", float(lhs), float(rhs), float(m), float(tol), verdict,
        strict_expected=True, equality_flag=abs(m) <= tol, sigma_prime_fraction=frac,
        extras=dict(bracket_min=float(bracket.min()), pointwise_sum_residual=sum_res,
                    curvature_sum_residual=pisum_res, t_term=float(tterm),
                    drop_t_term=bool(drop_t_term),
                    hx_residual=float(np.max(np.abs(dec["hx_residual"]))),
                    tol_estimated=estimated))


# support functions ---------------------------------------------------------------------


def normal_frames(imm):
    """Orthonormal frames (n, q, D) of the normal space of the immersion inside the target."""
    tgt = imm.target
    sig = tgt.signature
    D = tgt.coord_dim
    q = (tgt.ambient_dim) - imm.dX.shape[1]
    cand = _normal_part(tgt, imm.X, imm.dX, np.broadcast_to(np.eye(D), (imm.X.shape[0], D, D)).copy())
    frames = np.zeros((imm.X.shape[0], q, D))
    for i in range(imm.X.shape[0]):
        basis = []
        for col in np.argsort(-np.sum(cand[i] ** 2, axis=1)):
            v = cand[i, col].copy()
            for b in basis:
                v -= np.sum(v * sig * b) * b
            nrm = np.sum(v * sig * v)
            if nrm > 1e-10:
                basis.append(v / np.sqrt(nrm))
            if len(basis) == q:
                break
        frames[i] = basis
    return frames


def _support_fields(s, imm, alpha):
    if s.representation != "parametric":
        raise UnsupportedGeometryError("support identities need a parametric surface")
    tgt = imm.target
    F = SupportFunction(alpha, tgt)
    if abs(tgt.k - 1.0) > 1e-12:
        raise InvalidInputError("support identities are stated for unit curvature targets")
    require_isometric(imm)
    f = F(imm.X)
    grad_bar = F.alpha - tgt.curvature * f[:, None] * imm.X
    perp = _perp(imm, grad_bar)
    grad_comp = s.gradient_components(f)
    # directional derivative of the vector field perp along X_* grad f (flat coordinates)
    dperp = s.partials(perp)
    D_perp = np.einsum("na,nak->nk", grad_comp, dperp)
    II_ff = np.einsum("na,nb,nabk->nk", grad_comp, grad_comp, imm.II_vec)
    return F, f, perp, D_perp, II_ff


def _perp(imm, V):
    """Component of a model tangent vector normal to the immersed tangent space."""
    sig = imm.target.signature
    gram = gram_matrices(imm.target, imm.dX)
    c = np.linalg.solve(gram, np.einsum("nak,k,nk->na", imm.dX, sig, V)[..., None])[..., 0]
    return V - np.einsum("na,nak->nk", c, imm.dX)


def sphere_support_identities(s, imm, alpha):
    """Residuals (i)-(iii) of the support function identities on a unit sphere target."""
    _require_kind(imm, "spherical")
    F, f, perp, D_perp, II_ff = _support_fields(s, imm, alpha)
    nm1 = s.intrinsic_dim
    HS = spherical_decomposition(s, imm)["HS"]
    r1 = f**2 + s.grad_dot(f) + np.sum(perp**2, axis=1) - 1
    r2 = s.laplacian(f) + nm1 * f - np.sum(HS * perp, axis=1)
    frames = normal_frames(imm)
    r3 = np.einsum("nqk,nk->nq", frames, D_perp + II_ff)
    return dict(i=r1, ii=r2, iii=r3, f=f, perp=perp)


def hyperbolic_support_identities(s, imm, alpha):
    """Hyperboloid analogues: f^2 - |grad f|^2 - |perp|^2 - 1 and lap f - (n-1) f - <H_H, perp>."""
    _require_kind(imm, "hyperbolic")
    F, f, perp, D_perp, II_ff = _support_fields(s, imm, alpha)
    tgt = imm.target
    nm1 = s.intrinsic_dim
    HH = hyperbolic_decomposition(s, imm)["HH"]
    r1 = f**2 - s.grad_dot(f) - tgt.inner(perp, perp) - 1
    r2 = s.laplacian(f) - nm1 * f - tgt.inner(HH, perp)
    frames = normal_frames(imm)
    sig = tgt.signature
    r3 = np.einsum("nqk,k,nk->nq", frames, sig, D_perp + II_ff)
    return dict(i=r1, ii=r2, iii=r3, f=f, perp=perp)


def boosted(imm, rapidity, axis=1):
    """Lorentz boost of a hyperbolic immersion and the matching co-moving time axis."""
    L = lorentz_boost(imm.target.coord_dim, rapidity, axis)
    return imm.transformed(L), L[:, 0].copy()
