"""Refinement studies: tolerance estimates and observed convergence orders."""

import numpy as np
from scipy.optimize import brentq

from .catalog import MIN_RESOLUTION

TOL_FLOOR = 1e-8


def coarse_resolution(resolution):
    return max(MIN_RESOLUTION, int(resolution) // 2)


def estimate_tolerance(evaluate, surface, floor=TOL_FLOOR):
    """max(floor, |q(N) - q(N/2)|) for a scalar ``q = evaluate(surface)``.

    ``evaluate`` is re-run on the surface rebuilt at half resolution. Surfaces that
    cannot be rebuilt (meshes, user geometry) fall back to ``floor`` scaled by the
    mesh tolerance factor, and the second return value reports whether an actual
    estimate was made.
    """
    value = evaluate(surface)
    if not getattr(surface, "can_rebuild", False) or surface.resolution is None:
        return value, None
    coarse = surface.rebuild(coarse_resolution(surface.resolution))
    other = evaluate(coarse)
    return value, max(floor, float(np.max(np.abs(np.asarray(value) - np.asarray(other)))))


def observed_orders(h, err):
    """Pairwise observed orders log(e_i / e_{i+1}) / log(h_i / h_{i+1})."""
    h = np.asarray(h, dtype=float)
    err = np.abs(np.asarray(err, dtype=float))
    out = []
    for i in range(len(h) - 1):
        if err[i] == 0 or err[i + 1] == 0:
            out.append(np.inf if err[i + 1] == 0 else np.nan)
        else:
            out.append(np.log(err[i] / err[i + 1]) / np.log(h[i] / h[i + 1]))
    return np.array(out)


def _richardson_order(h, d1, d2):
    """Order p with (h0^p - h1^p) / (h1^p - h2^p) = d1 / d2 for a non-uniform sequence."""
    target = abs(d1 / d2)

    def f(p):
        return np.log((h[0] ** p - h[1] ** p) / (h[1] ** p - h[2] ** p)) - np.log(target)

    lo, hi = 1e-3, 20.0
    if f(lo) * f(hi) > 0:
        return np.nan
    return brentq(f, lo, hi)


def richardson_orders(values, ratio=2.0, h=None):
    """Order estimates from three consecutive levels without a reference value.

    Levels are assumed to shrink the mesh size by ``ratio`` unless the sizes ``h``
    are given.
    """
    v = np.asarray(values, dtype=float)
    out = []
    for i in range(len(v) - 2):
        d1, d2 = v[i + 1] - v[i], v[i + 2] - v[i + 1]
        if d1 == 0 or d2 == 0:
            out.append(np.inf if d2 == 0 else np.nan)
        elif h is None:
            out.append(np.log(abs(d1 / d2)) / np.log(ratio))
        else:
            out.append(_richardson_order(np.asarray(h[i:i + 3], dtype=float), d1, d2))
    return np.array(out)


def convergence_table(levels, values, exact=None, h=None):
    """Rows (level, value, error, order) for a refinement study.

    Orders come from the exact value when given, otherwise from successive differences
    (Richardson), in which case the first two rows carry no order.
    """
    values = np.asarray(values, dtype=float)
    h = np.asarray(levels if h is None else h, dtype=float)
    rows = []
    if exact is not None:
        err = np.abs(values - exact)
        orders = observed_orders(h, err)
        for i, lev in enumerate(levels):
            rows.append(dict(level=lev, value=float(values[i]), error=float(err[i]),
                             order=None if i == 0 else float(orders[i - 1])))
    else:
        orders = richardson_orders(values, h=h) if len(h) > 2 else []
        for i, lev in enumerate(levels):
            diff = None if i == 0 else float(abs(values[i] - values[i - 1]))
            rows.append(dict(level=lev, value=float(values[i]), error=diff,
                             order=None if i < 2 else float(orders[i - 2])))
    return rows


def verdict_inequality(margin, tol):
    """Non-strict inequality RHS - LHS >= 0."""
    if abs(margin) <= tol:
        return "equality"
    return "pass" if margin > 0 else "fail"


def verdict_strict(margin, tol):
    """Strict inequality: must beat the numerical noise floor to pass."""
    if margin > tol:
        return "pass"
    if margin >= -tol:
        return "inconclusive"
    return "fail"
