"""Closed-form geometry catalog of boundary surfaces.

Every family returns the boundary of a compact domain in a space form, sampled on a
spectral chart, with positions, tangents and second derivatives taken from closed
formulas. The second fundamental form is ``II_ij = -<nu, d_i d_j X>`` (valid in all
three models because ``nu`` is tangent to the model) and ``H`` is its trace.

Families
--------
euclidean_ball(r, dim)           round sphere of radius r in R^dim (dim 2 or 3)
euclidean_ellipsoid(a, b, c)     ellipsoid boundary in R^3
spherical_cap(k, r0, dim)        geodesic sphere of radius r0 about the pole of S^dim_k
spherical_tube_domain(k, rho)    tube of radius rho about a great circle of S^3_k
hyperbolic_ball(k, r0, dim)      geodesic sphere of radius r0 about the apex of H^dim_{-k}
curve_domain_2d(r0, cos, sin)    star-shaped planar domain r(theta) = r0 + Fourier terms
"""

import numpy as np

from .charts import CircleChart, SphereChart, TorusChart
from .errors import InvalidGeometryError, InvalidInputError
from .spaceform import SpaceForm
from .surface import BoundarySurface

CATALOG_VERSION = "1.0"
MIN_RESOLUTION = 8


def _unit_sphere(P):
    """Unit sphere in R^3 and its first/second parameter derivatives."""
    th, ph = P[..., 0], P[..., 1]
    st, ct, sp, cp = np.sin(th), np.cos(th), np.sin(ph), np.cos(ph)
    z = np.zeros_like(th)
    s = np.stack([st * cp, st * sp, ct], -1)
    s_t = np.stack([ct * cp, ct * sp, -st], -1)
    s_p = np.stack([-st * sp, st * cp, z], -1)
    s_tp = np.stack([-ct * sp, ct * cp, z], -1)
    s_pp = np.stack([-st * cp, -st * sp, z], -1)
    T = np.stack([s_t, s_p], -2)
    dd = np.stack([np.stack([-s, s_tp], -2), np.stack([s_tp, s_pp], -2)], -3)
    return s, T, dd


def _unit_circle(P):
    t = P[..., 0]
    s = np.stack([np.cos(t), np.sin(t)], -1)
    s_t = np.stack([-np.sin(t), np.cos(t)], -1)
    return s, s_t[..., None, :], -s[..., None, None, :]


def _round(dim, P):
    return _unit_sphere(P) if dim == 3 else _unit_circle(P)


def _chart(dim, resolution):
    return SphereChart(resolution) if dim == 3 else CircleChart(2 * resolution)


def _append(arr, value):
    """Append a constant last coordinate to every vector in ``arr``."""
    pad = np.full(arr.shape[:-1] + (1,), value, dtype=float)
    return np.concatenate([arr, pad], axis=-1)


def _prepend(arr, value):
    pad = np.full(arr.shape[:-1] + (1,), value, dtype=float)
    return np.concatenate([pad, arr], axis=-1)


def _positive(name, value):
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise InvalidGeometryError(f"parameter {name!r} must be positive, got {value}")
    return value


def _dim(value):
    dim = int(value)
    if dim not in (2, 3):
        raise InvalidInputError("dim must be 2 or 3")
    return dim


# families ---------------------------------------------------------------------------


def _euclidean_ball(P, r=1.0, dim=3):
    s, T, dd = _round(dim, P)
    return dict(space=SpaceForm.euclidean(dim), X=r * s, T=r * T, dd=r * dd, nu=s)


def _euclidean_ellipsoid(P, a=1.0, b=1.0, c=1.0):
    s, T, dd = _unit_sphere(P)
    ax = np.array([a, b, c])
    N = s / ax
    return dict(space=SpaceForm.euclidean(3), X=ax * s, T=ax * T, dd=ax * dd,
                nu=N / np.linalg.norm(N, axis=-1, keepdims=True))


def _spherical_cap(P, k=1.0, r0=np.pi / 4, dim=3):
    s, T, dd = _round(dim, P)
    sk = np.sqrt(k)
    a = sk * r0
    ra = np.sin(a) / sk
    X = _append(ra * s, np.cos(a) / sk)
    return dict(space=SpaceForm.sphere(dim, k), X=X, T=_append(ra * T, 0.0),
                dd=_append(ra * dd, 0.0), nu=_append(np.cos(a) * s, -np.sin(a)))


def _hyperbolic_ball(P, k=1.0, r0=1.0, dim=3):
    s, T, dd = _round(dim, P)
    sk = np.sqrt(k)
    a = sk * r0
    ra = np.sinh(a) / sk
    X = _prepend(ra * s, np.cosh(a) / sk)
    return dict(space=SpaceForm.hyperbolic(dim, k), X=X, T=_prepend(ra * T, 0.0),
                dd=_prepend(ra * dd, 0.0), nu=_prepend(np.cosh(a) * s, np.sinh(a)))


def _spherical_tube(P, k=1.0, rho=np.pi / 8):
    u, v = P[..., 0], P[..., 1]
    sk = np.sqrt(k)
    cr, sr = np.cos(rho), np.sin(rho)
    cu, su, cv, sv = np.cos(u), np.sin(u), np.cos(v), np.sin(v)
    z = np.zeros_like(u)
    X = np.stack([cr * cu, cr * su, sr * cv, sr * sv], -1) / sk
    X_u = np.stack([-cr * su, cr * cu, z, z], -1) / sk
    X_v = np.stack([z, z, -sr * sv, sr * cv], -1) / sk
    X_uu = np.stack([-cr * cu, -cr * su, z, z], -1) / sk
    X_vv = np.stack([z, z, -sr * cv, -sr * sv], -1) / sk
    zero = np.zeros_like(X)
    dd = np.stack([np.stack([X_uu, zero], -2), np.stack([zero, X_vv], -2)], -3)
    nu = np.stack([-sr * cu, -sr * su, cr * cv, cr * sv], -1)
    return dict(space=SpaceForm.sphere(3, k), X=X, T=np.stack([X_u, X_v], -2), dd=dd, nu=nu)


def _radial_profile(t, r0, cos, sin):
    r, dr, ddr = np.full_like(t, r0), np.zeros_like(t), np.zeros_like(t)
    for j, a in enumerate(cos, start=1):
        r += a * np.cos(j * t)
        dr -= j * a * np.sin(j * t)
        ddr -= j * j * a * np.cos(j * t)
    for j, b in enumerate(sin, start=1):
        r += b * np.sin(j * t)
        dr += j * b * np.cos(j * t)
        ddr -= j * j * b * np.sin(j * t)
    return r, dr, ddr


def _curve_domain(P, r0=1.0, cos=(), sin=()):
    t = P[..., 0]
    r, dr, ddr = _radial_profile(t, r0, cos, sin)
    e = np.stack([np.cos(t), np.sin(t)], -1)
    e_perp = np.stack([-np.sin(t), np.cos(t)], -1)
    X = r[..., None] * e
    Xt = dr[..., None] * e + r[..., None] * e_perp
    Xtt = (ddr - r)[..., None] * e + 2 * dr[..., None] * e_perp
    nu = np.stack([Xt[..., 1], -Xt[..., 0]], -1)
    nu /= np.linalg.norm(nu, axis=-1, keepdims=True)
    return dict(space=SpaceForm.euclidean(2), X=X, T=Xt[..., None, :],
                dd=Xtt[..., None, None, :], nu=nu)


def _check_curve(params):
    t = np.linspace(0, 2 * np.pi, 4096, endpoint=False)
    r, _, _ = _radial_profile(t, params["r0"], params["cos"], params["sin"])
    if np.any(r <= 0):
        raise InvalidGeometryError("radial profile r(theta) must stay positive")


def _check_cap(p):
    if p["r0"] * np.sqrt(p["k"]) >= np.pi:
        raise InvalidGeometryError("cap radius must be below pi/sqrt(k)")


def _check_tube(p):
    if p["rho"] >= np.pi / 2:
        raise InvalidGeometryError("tube radius must be below pi/2 (the tube self-intersects)")


FAMILIES = {
    "euclidean_ball": dict(
        build=_euclidean_ball, chart=lambda p, n: _chart(p["dim"], n),
        defaults=dict(r=1.0, dim=3), positive=("r",),
        closed_form=lambda p: {
            "H": f"(n-1)/r = {(p['dim'] - 1) / p['r']:.12g}",
            "II": "gamma / r",
            "area": 4 * np.pi * p["r"] ** 2 if p["dim"] == 3 else 2 * np.pi * p["r"],
            "lambda1": 2 / p["r"] ** 2 if p["dim"] == 3 else 1 / p["r"] ** 2,
            "spectrum": "l(l+1)/r^2 (dim 3), j^2/r^2 (dim 2)",
        }),
    "euclidean_ellipsoid": dict(
        build=_euclidean_ellipsoid, chart=lambda p, n: SphereChart(n),
        defaults=dict(a=1.0, b=1.0, c=1.0), positive=("a", "b", "c"),
        closed_form=lambda p: {
            "H": "trace of II (varies pointwise unless a = b = c)",
            "II": "II(v, w) = sum_i v_i w_i / a_i^2 / |(x_i / a_i^2)|",
            "area": None,
            "lambda1": None,
            "spectrum": "no closed form",
        }),
    "spherical_cap": dict(
        build=_spherical_cap, chart=lambda p, n: _chart(p["dim"], n),
        defaults=dict(k=1.0, r0=np.pi / 4, dim=3), positive=("k", "r0"), check=_check_cap,
        closed_form=lambda p: {
            "H": f"(n-1) sqrt(k) cot(sqrt(k) r0) = "
                 f"{(p['dim'] - 1) * np.sqrt(p['k']) / np.tan(np.sqrt(p['k']) * p['r0']):.12g}",
            "II": "sqrt(k) cot(sqrt(k) r0) gamma",
            "area": (4 * np.pi if p["dim"] == 3 else 2 * np.pi)
            * (np.sin(np.sqrt(p["k"]) * p["r0"]) / np.sqrt(p["k"])) ** (p["dim"] - 1),
            "lambda1": (p["dim"] - 1) * p["k"] / np.sin(np.sqrt(p["k"]) * p["r0"]) ** 2,
            "spectrum": "l(l+n-2) k / sin^2(sqrt(k) r0)",
        }),
    "spherical_tube_domain": dict(
        build=_spherical_tube, chart=lambda p, n: TorusChart(n),
        defaults=dict(k=1.0, rho=np.pi / 8), positive=("k", "rho"), check=_check_tube,
        closed_form=lambda p: {
            "H": f"sqrt(k) (cot rho - tan rho) = "
                 f"{np.sqrt(p['k']) * (1 / np.tan(p['rho']) - np.tan(p['rho'])):.12g}",
            "II": "principal curvatures -sqrt(k) tan rho, sqrt(k) cot rho",
            "area": 4 * np.pi**2 * np.cos(p["rho"]) * np.sin(p["rho"]) / p["k"],
            "lambda1": p["k"] / max(np.cos(p["rho"]), np.sin(p["rho"])) ** 2,
            "spectrum": "k (i^2 / cos^2 rho + j^2 / sin^2 rho)",
        }),
    "hyperbolic_ball": dict(
        build=_hyperbolic_ball, chart=lambda p, n: _chart(p["dim"], n),
        defaults=dict(k=1.0, r0=1.0, dim=3), positive=("k", "r0"),
        closed_form=lambda p: {
            "H": f"(n-1) sqrt(k) coth(sqrt(k) r0) = "
                 f"{(p['dim'] - 1) * np.sqrt(p['k']) / np.tanh(np.sqrt(p['k']) * p['r0']):.12g}",
            "II": "sqrt(k) coth(sqrt(k) r0) gamma",
            "area": (4 * np.pi if p["dim"] == 3 else 2 * np.pi)
            * (np.sinh(np.sqrt(p["k"]) * p["r0"]) / np.sqrt(p["k"])) ** (p["dim"] - 1),
            "lambda1": (p["dim"] - 1) * p["k"] / np.sinh(np.sqrt(p["k"]) * p["r0"]) ** 2,
            "spectrum": "l(l+n-2) k / sinh^2(sqrt(k) r0)",
        }),
    "curve_domain_2d": dict(
        build=_curve_domain, chart=lambda p, n: CircleChart(2 * n),
        defaults=dict(r0=1.0, cos=(), sin=()), positive=("r0",), check=_check_curve,
        closed_form=lambda p: {
            "H": "signed curvature (r^2 + 2 r'^2 - r r'') / (r^2 + r'^2)^(3/2)",
            "II": "curvature times gamma",
            "area": 2 * np.pi * p["r0"] if not (p["cos"] or p["sin"]) else None,
            "lambda1": None,
            "spectrum": "(2 pi j / length)^2",
        }),
}


def list_families():
    return sorted(FAMILIES)


def _normalize(name, params):
    if name not in FAMILIES:
        raise InvalidInputError(f"unknown catalog family {name!r}")
    fam = FAMILIES[name]
    params = dict(params or {})
    unknown = set(params) - set(fam["defaults"])
    if unknown:
        raise InvalidInputError(f"unknown parameters for {name}: {sorted(unknown)}")
    out = dict(fam["defaults"])
    out.update(params)
    for key in fam["positive"]:
        out[key] = _positive(key, out[key])
    if "dim" in out:
        out["dim"] = _dim(out["dim"])
    if "cos" in out:
        out["cos"] = tuple(float(x) for x in out["cos"])
        out["sin"] = tuple(float(x) for x in out["sin"])
    if "check" in fam:
        fam["check"](out)
    return fam, out


def closed_form(name, params=None):
    """Closed-form reference data (area, lambda1, formulas) for a family."""
    fam, p = _normalize(name, params)
    return fam["closed_form"](p)


def describe(name):
    """Human readable description of a family with its closed-form references."""
    fam, p = _normalize(name, None)
    ref = fam["closed_form"](p)
    lines = [f"{name}  (catalog {CATALOG_VERSION})",
             f"  parameters (defaults): {', '.join(f'{k}={v}' for k, v in p.items())}",
             f"  H: {ref['H']}",
             f"  II: {ref['II']}"]
    if ref["area"] is not None:
        lines.append(f"  area at defaults: {ref['area']:.12g}")
    lines.append(f"  spectrum: {ref['spectrum']}")
    return "\n".join(lines)


def build_catalog_surface(name, params=None, resolution=32):
    """Build a catalog boundary surface and its inclusion immersion.

    Returns ``(surface, immersion)``; the immersion is the inclusion of the surface
    into its enclosing space form.
    """
    from .immersion import inclusion

    fam, p = _normalize(name, params)
    resolution = int(resolution)
    if resolution < MIN_RESOLUTION:
        raise InvalidInputError(f"resolution must be at least {MIN_RESOLUTION}")
    chart = fam["chart"](p, resolution)
    geo = fam["build"](chart.ext_params(), **p)
    nodes = fam["build"](chart.node_params(), **p)
    space = geo["space"]
    dd = nodes["dd"]
    II = -np.einsum("nk,nijk->nij", nodes["nu"] * space.signature, dd)
    surf = BoundarySurface(space, chart, geo["X"], geo["T"], nodes["nu"], II,
                           H=None, family=name, params=p)
    surf.resolution = resolution
    return surf, inclusion(surf)
