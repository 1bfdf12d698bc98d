"""Boundary functionals A, B, C, the quadratic form Q(t) and the checks built on them.

For a function eta on the boundary of a domain with mean curvature H > 0

    A = int eta^2 / H,   B = int eta lap(eta) / H,
    C = int (lap eta)^2 / H - II(grad eta, grad eta),
    Q(t) = A t^2 + 2 B t + C = int (lap eta + t eta)^2 / H - int II(grad eta, grad eta).

If Ric >= (n-1) k inside, Q(t) >= 0 for every t <= (n-1) k / 2.
"""

from dataclasses import asdict, dataclass, field

import numpy as np

from .convergence import TOL_FLOOR, estimate_tolerance, verdict_inequality
from .errors import InvalidInputError, UnsupportedGeometryError
from .surface import MESH_TOL_FACTOR, BoundaryFunction

H_MIN = 1e-8


@dataclass
class FunctionalReport:
    A: float
    B: float
    C: float
    t_used: float = None
    Q_value: float = None
    case1_holds: bool = None
    case2_bound: float = None
    margin: float = None
    excluded_fraction: float = 0.0
    k: float = None
    K: float = None
    lhs: float = None
    rhs: float = None
    tol: float = None
    verdict: str = None
    notes: list = field(default_factory=list)

    def as_dict(self):
        return asdict(self)


def _eta(s, eta):
    if isinstance(eta, BoundaryFunction):
        if eta.surface is not s:
            raise InvalidInputError("function belongs to a different surface")
        return eta.values
    values = np.asarray(eta, dtype=float)
    if values.shape != (s.n_nodes,):
        raise InvalidInputError("function size does not match the surface")
    return values


def _require_H(s, h_min):
    bad = np.flatnonzero(s.H < h_min)
    if bad.size:
        raise UnsupportedGeometryError(
            f"mean curvature {s.H[bad[0]]:.3e} at node {bad[0]} is below the floor H_min = {h_min:g}")


def functionals_ABC(s, eta, h_min=H_MIN):
    """Return (A, B, C) for ``eta`` on surface ``s``."""
    _require_H(s, h_min)
    f = _eta(s, eta)
    norm = np.sqrt(s.integrate(f * f))
    if not norm > 1e-14 * np.sqrt(s.area):
        raise InvalidInputError("eta is trivial (zero L2 norm)")
    lap = s.laplacian(f)
    A = s.integrate(f * f / s.H)
    B = s.integrate(f * lap / s.H)
    C = s.integrate(lap * lap / s.H) - s.second_form_energy(f)
    return float(A), float(B), float(C)


def quadratic_form(A, B, C, t):
    return A * t * t + 2 * B * t + C


def q_direct(s, eta, t):
    """Q(t) assembled directly from its integral form (consistency oracle)."""
    f = _eta(s, eta)
    g = s.laplacian(f) + t * f
    return float(s.integrate(g * g / s.H) - s.second_form_energy(f))


def _resample(eta, surface):
    if isinstance(eta, BoundaryFunction) and eta.recipe is not None:
        return eta.on(surface)
    return None


def _tolerance(quantity, s, eta):
    """Quantity at full resolution and a Richardson-style error estimate."""
    if isinstance(eta, BoundaryFunction) and eta.recipe is not None and s.can_rebuild:
        def ev(surf):
            return quantity(surf, eta if surf is s else eta.on(surf))
        value, tol = estimate_tolerance(ev, s)
        if tol is not None:
            return value, tol, True
    value = quantity(s, eta)
    floor = TOL_FLOOR * (1 if s.representation == "parametric" else MESH_TOL_FACTOR)
    return value, floor, False


def check_main_inequality(s, eta, t, k, h_min=H_MIN):
    """int II(grad eta, grad eta) <= int (lap eta + t eta)^2 / H for t <= (n-1) k / 2."""
    nm1 = s.intrinsic_dim
    t = float(t)
    if t > nm1 * k / 2 + 1e-12:
        raise InvalidInputError(f"t = {t} exceeds the admissible bound (n-1) k / 2 = {nm1 * k / 2}")
    A, B, C = functionals_ABC(s, eta, h_min)

    def margin(surf, e):
        a, b, c = functionals_ABC(surf, e, h_min)
        return quadratic_form(a, b, c, t)

    Q, tol, estimated = _tolerance(margin, s, eta)
    f = _eta(s, eta)
    lhs = float(s.second_form_energy(f))
    rhs = lhs + Q
    verdict = verdict_inequality(Q, tol)
    notes = []
    if verdict == "equality":
        notes.append("equality: rigidity requires k = t = 0 and an extension with vanishing Hessian "
                     "(not decidable from boundary data)")
    if not estimated:
        notes.append("tolerance not estimated (no refinement available)")
    return FunctionalReport(A, B, C, t_used=t, Q_value=float(Q), margin=float(Q), k=float(k),
                            K=float(nm1 * k), lhs=lhs, rhs=float(rhs), tol=float(tol),
                            verdict=verdict, notes=notes)


def _case2(A, B, C):
    disc = (B / A) ** 2 - C / A
    if disc < 0:
        return None
    return -B / A - np.sqrt(disc)


def dichotomy(s, eta, k, h_min=H_MIN):
    """Either (B/A)^2 <= C/A, or K/2 <= -B/A - sqrt((B/A)^2 - C/A) with K = (n-1) k."""
    A, B, C = functionals_ABC(s, eta, h_min)
    K = s.intrinsic_dim * float(k)
    case1 = (B / A) ** 2 <= C / A
    report = FunctionalReport(A, B, C, case1_holds=bool(case1), k=float(k), K=K)
    if case1:
        report.verdict = "pass"
        report.notes.append("case 1 holds")
        return report

    def bound(surf, e):
        a, b, c = functionals_ABC(surf, e, h_min)
        cb = _case2(a, b, c)
        return np.nan if cb is None else cb

    cb, tol, _ = _tolerance(bound, s, eta)
    if not np.isfinite(tol):
        tol = TOL_FLOOR
    report.case2_bound = float(cb)
    report.margin = float(cb - K / 2)
    report.tol = float(tol)
    report.verdict = verdict_inequality(report.margin, tol)
    return report


def band(kappa, k, n):
    """Open interval excluded from the positive spectrum."""
    root = np.sqrt(kappa**2 + 2 * k)
    return (n - 1) / 4 * (kappa - root) ** 2, (n - 1) / 4 * (kappa + root) ** 2


def validate_kappa(s, kappa, tol=1e-10):
    """Raise unless II >= kappa gamma at every node."""
    from .surface import min_relative_curvature

    kmin = min_relative_curvature(s)
    bad = np.flatnonzero(kmin < kappa - tol)
    if bad.size:
        i = bad[np.argmin(kmin[bad])]
        raise InvalidInputError(
            f"kappa = {kappa} is not a lower bound of II: node {i} has principal curvature {kmin[i]:.6g}")


@dataclass
class BandReport:
    lower: float
    upper: float
    eigenvalues: list
    inside: list
    lambda1: float
    lambda1_bound: float
    lambda1_ok: bool
    tol: float
    verdict: str

    def as_dict(self):
        return asdict(self)


def eigen_band_check(spectrum, kappa, k, n, tol=1e-3, surface=None):
    """No positive eigenvalue in the band; lambda_1 >= upper endpoint when k >= 0."""
    kappa = float(kappa)
    k = float(k)
    if not kappa**2 + 2 * k > 0:
        raise InvalidInputError("kappa^2 + 2k must be positive")
    if surface is not None:
        validate_kappa(surface, kappa)
    lo, hi = band(kappa, k, n)
    ev = np.sort(np.asarray(spectrum, dtype=float))
    positive = ev[ev > tol]
    inside = [float(v) for v in positive if lo + tol < v < hi - tol]
    lam1 = float(positive[0]) if positive.size else np.nan
    ok = True
    if k >= 0 and positive.size:
        ok = lam1 >= hi - tol
    verdict = "pass" if (not inside and ok) else "fail"
    if verdict == "pass" and k >= 0 and abs(lam1 - hi) <= tol:
        verdict = "equality"
    return BandReport(float(lo), float(hi), [float(v) for v in ev], inside, lam1, float(hi),
                      bool(ok), float(tol), verdict)
