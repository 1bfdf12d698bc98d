"""Scenario execution: build geometry, run checks, assemble reports and refinement studies."""

import hashlib
import os
import threading
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .catalog import CATALOG_VERSION, build_catalog_surface
from .convergence import TOL_FLOOR, convergence_table
from .errors import CheckError, InvalidInputError, RBLError, ScenarioError
from .fem import (build_volume_mesh, dirichlet_lambda1, phi_boundary_max_probe,
                  reilly_residual, solve_helmholtz_dirichlet)
from .functionals import check_main_inequality, dichotomy, eigen_band_check
from .immersion import (euclidean_check, from_coordinates, hyperbolic_check, inclusion,
                        hyperbolic_support_identities, sphere_support_identities, spherical_check)
from .meshio import read_off
from .scenario import VOLUME_CHECKS
from .spaceform import SpaceForm, SupportFunction
from .surface import BoundaryFunction

DEFAULT_CELLS = 6
DEFAULT_DEGREE = 3
SUPPORT_TOL = 1e-5
REILLY_TOL = 1e-2
LAMBDA1_TOL = 1e-3
RANDOM_DEGREE = 3


def spatial(space, X):
    """Model coordinates along the chart axes (drops the pole / time coordinate)."""
    if space.kind == "spherical":
        return X[:, :-1]
    if space.kind == "hyperbolic":
        return X[:, 1:]
    return X


def _monomials(dim, degree):
    out = [()]
    for d in range(1, degree + 1):
        def rec(start, prefix):
            if len(prefix) == d:
                out.append(tuple(prefix))
                return
            for i in range(start, dim):
                rec(i, prefix + [i])
        rec(0, [])
    return out


def random_polynomial(seed, index, dim, degree=RANDOM_DEGREE):
    """Seeded random polynomial of ambient coordinates, as a function of the points.

    Restricted to a round 2-sphere the cubic polynomials span exactly the first 16
    eigenfunctions, and the same coefficients can be evaluated at any resolution.
    """
    mons = _monomials(dim, degree)
    coef = np.random.default_rng([seed, index]).normal(size=len(mons))

    def f(X):
        X = np.asarray(X, dtype=float)
        out = np.zeros(len(X))
        for c, m in zip(coef, mons):
            term = np.ones(len(X))
            for i in m:
                term = term * X[:, i]
            out += c * term
        return out

    return f


def _eta(name, seed, index, coord_dim):
    name = name or "random"
    if name == "random":
        f = random_polynomial(seed, index, coord_dim)
        return "random", lambda s: f(s.X)
    if name == "constant":
        return name, lambda s: np.ones(s.n_nodes)
    i = int(name[1:]) - 1
    if i >= coord_dim:
        raise InvalidInputError(f"eta {name} exceeds the {coord_dim} ambient coordinates")
    return name, lambda s: s.X[:, i].copy()


class Context:
    """Geometry shared by the checks of one scenario at one refinement level."""

    def __init__(self, scenario, resolution, cells_shift=0):
        self.scenario = scenario
        self.resolution = resolution
        self.cells_shift = cells_shift
        self._surface = None
        self._meshes = {}
        self._lock = threading.RLock()

    def _path(self, p):
        return p if os.path.isabs(p) else os.path.join(self.scenario.base_dir, p)

    def space_curvature(self):
        geo = self.scenario.geometry
        if "catalog" in geo:
            return self.surface()[0].space.curvature
        return None

    def surface(self):
        with self._lock:
            return self._build_surface()

    def _build_surface(self):
        if self._surface is None:
            geo = self.scenario.geometry
            if "catalog" in geo:
                s, imm = build_catalog_surface(geo["catalog"], geo.get("params"), self.resolution)
            else:
                sp = geo.get("space")
                space = None
                if sp is not None:
                    space = {"euclidean": SpaceForm.euclidean, "spherical": SpaceForm.sphere,
                             "hyperbolic": SpaceForm.hyperbolic}[sp["kind"]](
                        sp["dim"], *([sp["k"]] if sp["kind"] != "euclidean" else []))
                s = read_off(self._path(geo["mesh"]), space)
                imm = inclusion(s)
            im = self.scenario.immersion
            if im is not None and im["source"] == "table":
                t = im["target"]
                target = {"euclidean": SpaceForm.euclidean, "spherical": SpaceForm.sphere,
                          "hyperbolic": SpaceForm.hyperbolic}[t["kind"]](
                    t["dim"], *([t["k"]] if t["kind"] != "euclidean" else []))
                coords = np.loadtxt(self._path(im["table"]), ndmin=2)
                imm = from_coordinates(s, target, coords)
            self._surface = (s, imm)
        return self._surface

    def mesh(self, cells, degree):
        key = (cells + self.cells_shift, degree)
        with self._lock:
            return self._build_mesh(key)

    def _build_mesh(self, key):
        if key not in self._meshes:
            geo = self.scenario.geometry
            self._meshes[key] = build_volume_mesh(geo["catalog"], geo.get("params"), key[0], key[1])
        return self._meshes[key]


def _report(verdict, value, lhs=None, rhs=None, margin=None, tol=None, notes=(), **details):
    clean = {}
    for k, v in details.items():
        clean[k] = _plain(v)
    return dict(verdict=verdict, value=_plain(value), lhs=_plain(lhs), rhs=_plain(rhs),
                margin=_plain(margin), tol=_plain(tol), notes=list(notes), details=clean)


def _plain(v):
    if v is None or isinstance(v, (bool, str)):
        return v
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(v)
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_plain(x) for x in v]
    return str(v)


def _require_k(ctx, k, where):
    c = ctx.space_curvature()
    bound = c if c is not None else ctx.scenario.ricci_attestation
    if bound is None:
        raise ScenarioError("a user mesh needs 'ricci_attestation' to certify Ric >= (n-1)k",
                            field=where)
    if k > bound + 1e-12:
        raise ScenarioError(f"k = {k} exceeds the certified curvature bound {bound}", field=where)


# individual checks -------------------------------------------------------------------------


def _main_inequality(ctx, chk, index):
    s, _ = ctx.surface()
    k = float(chk["k"])
    _require_k(ctx, k, f"checks[{index}].k")
    name, recipe = _eta(chk.get("eta"), ctx.scenario.seed, index, s.coord_dim)
    eta = BoundaryFunction(s, recipe(s), name, recipe)
    kw = {"h_min": chk["h_min"]} if "h_min" in chk else {}
    r = check_main_inequality(s, eta, float(chk["t"]), k, **kw)
    return _report(r.verdict, r.Q_value, r.lhs, r.rhs, r.margin, r.tol, r.notes,
                   A=r.A, B=r.B, C=r.C, t=r.t_used, k=r.k, eta=name)


def _dichotomy(ctx, chk, index):
    s, _ = ctx.surface()
    k = float(chk["k"])
    _require_k(ctx, k, f"checks[{index}].k")
    name, recipe = _eta(chk.get("eta"), ctx.scenario.seed, index, s.coord_dim)
    eta = BoundaryFunction(s, recipe(s), name, recipe)
    kw = {"h_min": chk["h_min"]} if "h_min" in chk else {}
    r = dichotomy(s, eta, k, **kw)
    value = r.case2_bound if r.case2_bound is not None else r.C / r.A - (r.B / r.A) ** 2
    return _report(r.verdict, value, margin=r.margin, tol=r.tol, notes=r.notes, A=r.A, B=r.B,
                   C=r.C, case1_holds=r.case1_holds, case2_bound=r.case2_bound, K=r.K, eta=name)


def _eigen_band(ctx, chk, index):
    s, _ = ctx.surface()
    k = float(chk["k"])
    _require_k(ctx, k, f"checks[{index}].k")
    count = chk.get("count", 10)
    vals, _ = s.eigen_decomposition(count)
    tol = chk.get("tol", 1e-3)
    r = eigen_band_check(vals, float(chk["kappa"]), k, s.intrinsic_dim + 1, tol=tol, surface=s)
    return _report(r.verdict, r.lambda1, lhs=r.lambda1_bound, rhs=r.lambda1,
                   margin=r.lambda1 - r.upper, tol=r.tol, band=[r.lower, r.upper],
                   eigenvalues=r.eigenvalues, inside_band=r.inside)


def _tmc(fn):
    def run(ctx, chk, index):
        s, imm = ctx.surface()
        kw = {key: chk[key] for key in ("eps_h", "k", "time_axis", "drop_t_term") if key in chk}
        r = fn(s, imm, **kw)
        d = r.as_dict()
        extras = {key: d[key] for key in d if key not in ("lhs", "rhs", "margin", "tol", "verdict")}
        return _report(r.verdict, r.margin, r.lhs, r.rhs, r.margin, r.tol, **extras)
    return run


def _random_alpha(target, rng):
    """Random point of the unit-curvature model (unit vector or hyperboloid point)."""
    return target.random_points(rng, 1)[0] * np.sqrt(target.k)


def _support(ctx, chk, index):
    s, imm = ctx.surface()
    target = imm.target
    if target.kind == "euclidean":
        raise InvalidInputError("support identities need a spherical or hyperbolic target")
    fn = sphere_support_identities if target.kind == "spherical" else hyperbolic_support_identities
    alpha = chk.get("alpha", "random")
    if alpha == "random":
        rng = np.random.default_rng([ctx.scenario.seed, index])
        alphas = [_random_alpha(target, rng) for _ in range(chk.get("count", 20))]
    else:
        alphas = [np.asarray(alpha, dtype=float)]
    tol = chk.get("tol", SUPPORT_TOL)
    worst = {"i": 0.0, "ii": 0.0, "iii": 0.0}
    for a in alphas:
        res = fn(s, imm, a)
        for key in worst:
            worst[key] = max(worst[key], float(np.max(np.abs(res[key]))))
    value = max(worst.values())
    return _report("pass" if value <= tol else "fail", value, tol=tol, count=len(alphas),
                   residual_i=worst["i"], residual_ii=worst["ii"], residual_iii=worst["iii"])


def _reilly(ctx, chk, index):
    mesh = ctx.mesh(chk.get("cells", DEFAULT_CELLS), chk.get("degree", DEFAULT_DEGREE))
    space = mesh.space

    def data(X):
        S = spatial(space, X)
        return S[:, 0] ** 2 - S[:, 1] ** 2 if chk.get("field", "quadratic") == "quadratic" else S[:, 0]

    u = solve_helmholtz_dirichlet(mesh, 0.0, data)
    r = reilly_residual(mesh, u)
    tol = chk.get("tol", REILLY_TOL)
    verdict = "pass" if r.relative_residual <= tol else "fail"
    return _report(verdict, r.residual, r.lhs, r.rhs, tol=tol * r.boundary_magnitude,
                   relative_residual=r.relative_residual, mesh_size=r.mesh_size,
                   boundary_magnitude=r.boundary_magnitude, cells=mesh.cells, degree=mesh.degree,
                   **r.terms)


def _lambda1(ctx, chk, index):
    mesh = ctx.mesh(chk.get("cells", DEFAULT_CELLS), chk.get("degree", DEFAULT_DEGREE))
    lam = dirichlet_lambda1(mesh)
    n = mesh.dim
    c = mesh.space.curvature
    tol = chk.get("tol", LAMBDA1_TOL)
    notes = []
    if c > 0:
        verdict = "pass" if lam >= n * c - tol else "fail"
        if abs(lam - n * c) <= tol:
            verdict = "equality"
            notes.append("lambda1 = n k: rigidity value (hemisphere)")
    else:
        verdict = "pass"
        notes.append("k <= 0: comparison reported, not asserted")
    return _report(verdict, lam, lhs=n * c, rhs=lam, margin=lam - n * c, tol=tol, notes=notes,
                   cells=mesh.cells, degree=mesh.degree, mesh_size=mesh.h)


def _phi_probe(ctx, chk, index):
    mesh = ctx.mesh(chk.get("cells", DEFAULT_CELLS), chk.get("degree", DEFAULT_DEGREE))
    space = mesh.space
    variant = chk["variant"]
    n = mesh.dim
    if variant == "spherical":
        lam = n * space.k
    elif variant == "hyperbolic":
        lam = -n * space.k
    else:
        lam = float(chk.get("lambda", 0.0))
    alpha = chk.get("alpha")
    if alpha == "random":
        alpha = _random_alpha(space, np.random.default_rng([ctx.scenario.seed, index]))
    elif alpha is not None:
        alpha = np.asarray(alpha, dtype=float)
    if alpha is not None:
        F = SupportFunction(alpha, space)
        u = solve_helmholtz_dirichlet(mesh, lam, lambda X: F(X))
    else:
        u = solve_helmholtz_dirichlet(mesh, lam, lambda X: spatial(space, X)[:, 0])
    r = phi_boundary_max_probe(mesh, u, variant, alpha=alpha)
    return _report(r.verdict, r.interior_max - r.boundary_max, lhs=r.interior_max,
                   rhs=r.boundary_max, margin=r.boundary_max - r.interior_max, tol=r.tol,
                   notes=["weak maximum principle only; the strong (Hopf) form is not checked"],
                   boundary_identity_residual=r.boundary_identity_residual,
                   normal_derivative_residual=r.normal_derivative_residual, mesh_size=r.mesh_size, variant=variant)


CHECKS = {
    "main_inequality": _main_inequality,
    "dichotomy": _dichotomy,
    "eigen_band": _eigen_band,
    "euclidean_tmc": _tmc(euclidean_check),
    "spherical_tmc": _tmc(spherical_check),
    "hyperbolic_tmc": _tmc(hyperbolic_check),
    "support_identities": _support,
    "reilly": _reilly,
    "lambda1": _lambda1,
    "phi_probe": _phi_probe,
}


def _label(chk, index):
    return f"{index}:{chk['type']}"


def _run_one(ctx, chk, index):
    try:
        out = CHECKS[chk["type"]](ctx, chk, index)
    except ScenarioError:
        raise
    except RBLError as exc:
        err = CheckError(_label(chk, index), exc)
        out = _report("fail", None, notes=[str(err)], error=type(exc).__name__)
    out = dict(index=index, check=_label(chk, index), type=chk["type"], **out)
    return out


def run_checks(scenario, resolution=None, cells_shift=0, parallel=False):
    ctx = Context(scenario, resolution or scenario.resolution, cells_shift)
    jobs = list(enumerate(scenario.checks))
    if parallel and len(jobs) > 1:
        # geometry is built once up front so the workers only read it
        if any(c["type"] not in VOLUME_CHECKS for c in scenario.checks):
            ctx.surface()
        with ThreadPoolExecutor() as pool:
            results = list(pool.map(lambda ic: _run_one(ctx, ic[1], ic[0]), jobs))
    else:
        results = [_run_one(ctx, c, i) for i, c in jobs]
    return results


def provenance(scenario, resolution=None):
    return dict(package_version=__version__, catalog_version=CATALOG_VERSION,
                schema_version=1, seed=scenario.seed,
                resolution=resolution or scenario.resolution,
                scenario_sha256=hashlib.sha256(scenario.source_text.encode()).hexdigest())


def overall_status(results):
    return "fail" if any(r["verdict"] == "fail" for r in results) else "pass"


def run(scenario, parallel=False):
    """RunReport as a plain dict."""
    results = run_checks(scenario, parallel=parallel)
    return dict(scenario=scenario.name, mode="run", status=overall_status(results),
                provenance=provenance(scenario), checks=results)


def _level_plan(scenario, levels):
    """(resolution, cells shift) per level: surfaces double, volume meshes add two cells."""
    return [(scenario.resolution * 2**j, 2 * j) for j in range(levels)]


def _stabilized(values, tol):
    v = np.asarray(values, dtype=float)
    if len(v) < 3 or not np.all(np.isfinite(v)):
        return bool(np.all(np.isfinite(v)))
    d = np.abs(np.diff(v))
    floor = max(tol, TOL_FLOOR * max(1.0, abs(v[-1])))
    return bool(d[-1] <= floor or d[-1] <= d[-2])


def converge(scenario, levels):
    """Re-run every check over ``levels`` refinements and estimate convergence orders."""
    if levels < 3:
        raise ScenarioError("at least 3 refinement levels are needed", field="levels")
    plan = _level_plan(scenario, levels)
    runs = [run_checks(scenario, res, shift) for res, shift in plan]
    checks, tables = [], []
    for i, chk in enumerate(scenario.checks):
        per = [r[i] for r in runs]
        if chk["type"] in VOLUME_CHECKS:
            lev = [chk.get("cells", DEFAULT_CELLS) + shift for _, shift in plan]
            h = [p["details"].get("mesh_size") for p in per]
        else:
            lev = [res for res, _ in plan]
            h = [1.0 / res for res in lev]
        values = [np.nan if p["value"] is None else p["value"] for p in per]
        exact = 0.0 if chk["type"] == "reilly" else None
        if None in h or not np.all(np.isfinite(values)):
            rows = [dict(level=lv, value=float(v), error=None, order=None)
                    for lv, v in zip(lev, values)]
        else:
            rows = convergence_table(lev, values, exact=exact, h=h)
        for row, hh in zip(rows, h):
            row["h"] = hh
        tol = per[-1]["tol"] if per[-1]["tol"] is not None else 0.0
        stable = _stabilized(values, tol) if exact is None else bool(
            np.all(np.isfinite(values)) and abs(values[-1]) <= abs(values[0]))
        orders = [r["order"] for r in rows if r["order"] is not None]
        fit = None
        if exact is not None and np.all(np.isfinite(values)) and None not in h:
            err = np.abs(np.asarray(values)) + 1e-300
            fit = float(np.polyfit(np.log(h), np.log(err), 1)[0])
        final = dict(per[-1])
        notes = list(final["notes"])
        if not stable and final["value"] is not None:
            notes.append("value did not stabilize under refinement")
        final["notes"] = notes
        final["convergence"] = dict(levels=lev, values=[float(v) for v in values],
                                    orders=orders, fitted_order=fit, stabilized=stable)
        checks.append(final)
        for row in rows:
            tables.append(dict(index=i, check=_label(chk, i), **row))
    status = overall_status(checks)
    return dict(scenario=scenario.name, mode="converge", status=status,
                provenance=provenance(scenario), levels=levels, checks=checks), tables
