import json
from functools import lru_cache

import numpy as np
import pytest

from rbl.catalog import build_catalog_surface
from rbl.runner import random_polynomial
from rbl.surface import BoundaryFunction


@lru_cache(maxsize=None)
def _surface(name, params, resolution):
    return build_catalog_surface(name, dict(params), resolution)


def catalog(name, resolution=32, **params):
    """Cached (surface, inclusion) pair."""
    return _surface(name, tuple(sorted(params.items())), resolution)


def coordinate(s, i):
    recipe = lambda surf: surf.X[:, i].copy()
    return BoundaryFunction(s, recipe(s), f"x{i + 1}", recipe)


def random_eta(s, seed, index=0):
    f = random_polynomial(seed, index, s.coord_dim)
    recipe = lambda surf: f(surf.X)
    return BoundaryFunction(s, recipe(s), "random", recipe)


# one representative parameter set per family, away from the defaults where useful
CATALOG_CASES = [
    ("euclidean_ball", {"r": 1.3}),
    ("euclidean_ball", {"dim": 2}),
    ("euclidean_ellipsoid", {"a": 1.5, "b": 1.0, "c": 0.7}),
    ("spherical_cap", {"r0": 1.0}),
    ("spherical_cap", {"r0": 0.8, "k": 2.0}),
    ("spherical_tube_domain", {}),
    ("hyperbolic_ball", {"r0": 1.0}),
    ("curve_domain_2d", {"cos": (0.15,), "sin": (0.0, 0.1)}),
]


@pytest.fixture
def write_scenario(tmp_path):
    def write(body, name="scenario.json"):
        path = tmp_path / name
        path.write_text(json.dumps(body, indent=2) if not isinstance(body, str) else body)
        return path
    return write


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
