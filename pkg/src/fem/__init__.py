"""FEM package - meshes, quadrature, P1 spaces, assembly and linear solves."""

from .mesh import (
    TriMesh,
    PointLocation,
    triangulate_polygon,
    box_mesh,
    refine_uniform,
    build_mesh,
    locate_point,
    locate_points,
    mesh_statistics,
    mesh_to_json,
)
from .quadrature import QuadratureRule, triangle_rule, tetrahedron_rule, rule_for_dim
from .space import FeFunction, evaluate, prolongate
from .assembly import (
    SparseOperator,
    assemble_stiffness,
    assemble_weighted_mass,
    assemble_mass,
    assemble_load,
    assemble_semilinear_residual,
    dirac_load_vector,
    locate_sources,
    SourceLocations,
    integrate,
    l2_inner,
)
from .linalg import solve_spd
from .norms import Subdomain, norm_errors

__all__ = [
    "TriMesh",
    "PointLocation",
    "triangulate_polygon",
    "box_mesh",
    "refine_uniform",
    "build_mesh",
    "locate_point",
    "locate_points",
    "mesh_statistics",
    "mesh_to_json",
    "QuadratureRule",
    "triangle_rule",
    "tetrahedron_rule",
    "rule_for_dim",
    "FeFunction",
    "evaluate",
    "prolongate",
    "SparseOperator",
    "assemble_stiffness",
    "assemble_weighted_mass",
    "assemble_mass",
    "assemble_load",
    "assemble_semilinear_residual",
    "dirac_load_vector",
    "locate_sources",
    "SourceLocations",
    "integrate",
    "l2_inner",
    "solve_spd",
    "Subdomain",
    "norm_errors",
]
