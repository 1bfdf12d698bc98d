"""Reilly-type boundary inequalities on space-form domains.

Modules:

``spaceform``      Euclidean, spherical and hyperbolic models, support functions
``surface``        parametric and triangulated boundary surfaces and their calculus
``catalog``        closed-form geometry families
``functionals``    the boundary functionals A, B, C, Q(t), dichotomy and eigenvalue band
``immersion``      total mean curvature bounds for immersed boundaries
``fem``            volume meshes, Helmholtz extension, Reilly's identity, phi probe
``meshio``         OFF meshes
``scenario``, ``runner``, ``reports``, ``cli``   scenario driven runs
"""

__version__ = "0.1.0"

from .catalog import build_catalog_surface, describe, list_families  # noqa: E402
from .spaceform import SpaceForm, SupportFunction  # noqa: E402

__all__ = ["SpaceForm", "SupportFunction", "build_catalog_surface", "describe", "list_families",
           "__version__"]
