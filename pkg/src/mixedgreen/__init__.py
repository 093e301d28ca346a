"""Numerical laboratory for the 2D Stokes system with mixed Dirichlet/traction data.

Modules: ``geometry`` (domains, boundary decompositions, local domains),
``mesh`` (triangulation and refinement), ``fem`` (Taylor-Hood solver),
``bogovskii`` (divergence right inverse), ``green`` (discrete Green
function), ``norms`` (Lorentz and Sobolev functionals), ``verifiers``
(Korn, Poincaré-Sobolev, Caccioppoli, local Hölder) and ``cli``.
"""
from .bogovskii import BogovskiiOperator, ChainCover, build_chain, solve_div
from .fem import FESpace, Field, IncompatibleDataError, SolverError, apply_T, assemble, inf_sup_constant, solve
from .geometry import (
    BoundaryDecomposition,
    GeometryError,
    PolygonalDomain,
    ahlfors_david_check,
    load_domain,
    local_domain,
    opening_check,
)
from .green import build_green_column, evaluate_green, green_columns, representation_solve, symmetry_probe
from .mesh import MeshError, TriangleMesh, refine, triangulate
from .norms import WeightedSamples, lorentz_norm

__version__ = "0.1.0"

__all__ = [
    "BogovskiiOperator", "ChainCover", "build_chain", "solve_div",
    "FESpace", "Field", "IncompatibleDataError", "SolverError", "apply_T", "assemble", "inf_sup_constant", "solve",
    "BoundaryDecomposition", "GeometryError", "PolygonalDomain", "ahlfors_david_check", "load_domain",
    "local_domain", "opening_check",
    "build_green_column", "evaluate_green", "green_columns", "representation_solve", "symmetry_probe",
    "MeshError", "TriangleMesh", "refine", "triangulate",
    "WeightedSamples", "lorentz_norm",
]
