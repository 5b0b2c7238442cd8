"""
P1 finite element assembly.

All operators and load vectors are returned on the interior degrees of
freedom only; Dirichlet vertices are eliminated. Element contributions are
computed for all cells at once and reduced in fixed cell order, so results are
deterministic.
"""

import logging
from dataclasses import dataclass
from typing import Any, Callable, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

from ..errors import MeshMismatch, MonotonicityViolation
from .mesh import TriMesh, locate_points
from .quadrature import QuadratureRule, rule_for_dim
from .space import FeFunction, evaluate


logger = logging.getLogger(__name__)

# Operators are scipy CSR matrices (indptr, indices, data) over interior dofs.
SparseOperator = sp.csr_matrix

# A scalar field: a constant, a callable of the coordinates (..., d) -> (...),
# or a P1 function on this or another mesh of the same domain.
Field = Union[float, Callable[[np.ndarray], np.ndarray], FeFunction]


def quadrature_points(mesh: TriMesh, rule: QuadratureRule) -> np.ndarray:
    """Physical quadrature points, shape (n_cells, n_points, d)."""
    return np.einsum("qa,cad->cqd", rule.points, mesh.vertices[mesh.cells])


def interpolate_at_quadrature(fn: FeFunction, rule: QuadratureRule) -> np.ndarray:
    """Values of a P1 function at the quadrature points of its own mesh."""
    return np.einsum("qa,ca->cq", rule.points, fn.values[fn.mesh.cells])


def field_at_quadrature(mesh: TriMesh, field: Field, rule: QuadratureRule) -> np.ndarray:
    """
    Evaluate a field at every quadrature point of a mesh.

    Args:
        mesh: Mesh that owns the quadrature points
        field: Constant, callable of the coordinates, or P1 function
        rule: Quadrature rule

    Returns:
        (n_cells, n_points) values
    """
    if isinstance(field, FeFunction):
        if field.mesh is mesh:
            return interpolate_at_quadrature(field, rule)
        if field.mesh.dim != mesh.dim:
            raise MeshMismatch("Field and mesh have different dimensions")
        points = quadrature_points(mesh, rule)
        return evaluate(field, points.reshape(-1, mesh.dim)).reshape(points.shape[:2])
    if callable(field):
        points = quadrature_points(mesh, rule)
        values = np.asarray(field(points), dtype=float)
        return np.broadcast_to(values, points.shape[:2]).copy()
    return np.full((mesh.n_cells, rule.size), float(field))


def _restrict_matrix(mesh: TriMesh, local: np.ndarray) -> SparseOperator:
    """Sum element matrices into a CSR operator on the interior dofs."""
    dofs = mesh.dof_map[mesh.cells]
    k = mesh.cells.shape[1]
    rows = np.repeat(dofs, k, axis=1).ravel()
    cols = np.tile(dofs, (1, k)).ravel()
    vals = local.reshape(-1)
    keep = (rows >= 0) & (cols >= 0)
    n = mesh.interior.size
    matrix = sp.coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n, n))
    return matrix.tocsr()


def _restrict_vector(mesh: TriMesh, local: np.ndarray) -> np.ndarray:
    """Sum element vectors into a vector on the interior dofs."""
    full = np.bincount(mesh.cells.ravel(), weights=local.ravel(), minlength=mesh.n_vertices)
    return full[mesh.interior]


def assemble_stiffness(mesh: TriMesh) -> SparseOperator:
    """
    Stiffness matrix of the Dirichlet Laplacian.

    P1 gradients are constant per cell, so element integrals are exact.
    """
    grads = mesh.gradients
    local = mesh.volumes[:, None, None] * np.einsum("cad,cbd->cab", grads, grads)
    return _restrict_matrix(mesh, local)


def assemble_weighted_mass(
    mesh: TriMesh,
    weight: Field,
    rule: Optional[QuadratureRule] = None,
    check_sign: bool = True,
) -> SparseOperator:
    """
    Weighted mass matrix with entries ``integral(w * phi_i * phi_j)``.

    Args:
        mesh: Mesh
        weight: Coefficient field, evaluated at quadrature points
        rule: Quadrature rule; the dimension default if omitted
        check_sign: Reject negative weights (the operator must stay PSD)

    Returns:
        CSR operator on the interior dofs

    Raises:
        MonotonicityViolation: If ``check_sign`` and the weight is negative somewhere
    """
    rule = rule or rule_for_dim(mesh.dim)
    return weighted_mass_from_values(mesh, field_at_quadrature(mesh, weight, rule), rule, check_sign)


def weighted_mass_from_values(
    mesh: TriMesh, w: np.ndarray, rule: QuadratureRule, check_sign: bool = True
) -> SparseOperator:
    """Weighted mass matrix from weight values at the quadrature points, shape (n_cells, n_points)."""
    if check_sign and np.any(w < 0.0):
        where = np.unravel_index(np.argmin(w), w.shape)
        raise MonotonicityViolation(
            f"Negative weight {w[where]:.3e} in cell {where[0]}; "
            "the nonlinearity must satisfy 0 <= da/dy"
        )
    scaled = w * rule.normalized_weights[None, :]
    local = mesh.volumes[:, None, None] * np.einsum(
        "cq,qa,qb->cab", scaled, rule.points, rule.points
    )
    return _restrict_matrix(mesh, local)


def assemble_mass(mesh: TriMesh) -> SparseOperator:
    return assemble_weighted_mass(mesh, 1.0)


def assemble_load(mesh: TriMesh, density: Field, rule: Optional[QuadratureRule] = None) -> np.ndarray:
    """Load vector ``integral(f * phi_i)`` on the interior dofs."""
    rule = rule or rule_for_dim(mesh.dim)
    f = field_at_quadrature(mesh, density, rule)
    return load_from_quadrature_values(mesh, f, rule)


def load_from_quadrature_values(mesh: TriMesh, f: np.ndarray, rule: QuadratureRule) -> np.ndarray:
    """Load vector from density values at the quadrature points, shape (n_cells, n_points)."""
    scaled = f * rule.normalized_weights[None, :]
    local = mesh.volumes[:, None] * np.einsum("cq,qa->ca", scaled, rule.points)
    return _restrict_vector(mesh, local)


def assemble_semilinear_residual(mesh: TriMesh, y_h: FeFunction, nl: Any) -> np.ndarray:
    """
    Nonlinear term ``integral(a(x, y_h) * phi_i)`` by quadrature.

    Args:
        mesh: Mesh of ``y_h``
        y_h: Current state
        nl: Nonlinearity providing ``a(x, y)``

    Returns:
        Vector on the interior dofs
    """
    if y_h.mesh is not mesh:
        raise MeshMismatch("State does not live on the assembly mesh")
    rule = rule_for_dim(mesh.dim)
    x = quadrature_points(mesh, rule)
    y = interpolate_at_quadrature(y_h, rule)
    return load_from_quadrature_values(mesh, nl.a(x, y), rule)


@dataclass(frozen=True, eq=False)
class SourceLocations:
    """Cells and barycentric coordinates of the ordered Dirac points on one mesh.

    Load assembly and point evaluation both read these, so ``p_h(z)`` is taken
    from the same cell that carries the load of ``z``.
    """

    mesh: TriMesh
    points: np.ndarray
    cells: np.ndarray
    barycentric: np.ndarray

    @property
    def count(self) -> int:
        return int(self.points.shape[0])

    def load(self, amplitudes: Any) -> np.ndarray:
        """Interior load vector ``sum_z u_z * phi_i(z)``."""
        u = np.asarray(amplitudes, dtype=float).reshape(-1)
        if u.size != self.count:
            raise ValueError(f"Expected {self.count} amplitudes, got {u.size}")
        local = self.barycentric * u[:, None]
        corners = self.mesh.cells[self.cells]
        full = np.bincount(corners.ravel(), weights=local.ravel(), minlength=self.mesh.n_vertices)
        return full[self.mesh.interior]

    def values(self, fn: FeFunction) -> np.ndarray:
        """Point values ``fn(z)`` for every source point."""
        if fn.mesh is not self.mesh:
            raise MeshMismatch("Function does not live on the source mesh")
        corners = self.mesh.cells[self.cells]
        return np.einsum("za,za->z", self.barycentric, fn.values[corners])


def locate_sources(mesh: TriMesh, points: Sequence[Sequence[float]]) -> SourceLocations:
    """Locate the ordered Dirac points once per mesh."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    cells, lam = locate_points(mesh, pts)
    return SourceLocations(mesh=mesh, points=pts, cells=cells, barycentric=lam)


def dirac_load_vector(mesh: TriMesh, points: Sequence[Sequence[float]], u: Any) -> np.ndarray:
    """
    Load vector of a linear combination of Dirac measures.

    Args:
        mesh: Mesh
        points: Ordered source points, strictly inside the domain
        u: Amplitudes, one per point

    Returns:
        Interior vector with entries ``sum_z u_z * phi_i(z)``

    Raises:
        PointOutsideDomain: If a source point is outside the domain
    """
    return locate_sources(mesh, points).load(u)


def integrate(mesh: TriMesh, field: Field, rule: Optional[QuadratureRule] = None) -> float:
    """Quadrature approximation of ``integral(field)`` over the meshed domain."""
    rule = rule or rule_for_dim(mesh.dim)
    values = field_at_quadrature(mesh, field, rule)
    return float(np.sum(mesh.volumes[:, None] * rule.normalized_weights[None, :] * values))


def l2_inner(mesh: TriMesh, f: Field, g: Field, rule: Optional[QuadratureRule] = None) -> float:
    """``(f, g)`` in L2 by quadrature on ``mesh``."""
    rule = rule or rule_for_dim(mesh.dim)
    product = field_at_quadrature(mesh, f, rule) * field_at_quadrature(mesh, g, rule)
    return float(np.sum(mesh.volumes[:, None] * rule.normalized_weights[None, :] * product))
