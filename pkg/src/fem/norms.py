"""
Error norms between finite element functions and reference fields.
"""

from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from .assembly import Field, field_at_quadrature, interpolate_at_quadrature
from .mesh import TriMesh, polygon_contains, validate_convex_polygon
from .quadrature import rule_for_dim
from .space import FeFunction, prolongate


@dataclass(frozen=True)
class Subdomain:
    """Interior subdomain on which maximum-norm errors are measured.

    One of: a convex polygon (2-D), a ball given by centre and radius, or an
    axis-aligned box (3-D).
    """

    polygon: Optional[np.ndarray] = None
    center: Optional[Tuple[float, ...]] = None
    radius: Optional[float] = None
    box: Optional[Tuple[Tuple[float, ...], Tuple[float, ...]]] = None

    @classmethod
    def from_polygon(cls, vertices: Sequence[Sequence[float]]) -> "Subdomain":
        return cls(polygon=validate_convex_polygon(vertices))

    @classmethod
    def disk(cls, center: Sequence[float], radius: float) -> "Subdomain":
        if radius <= 0.0:
            raise ValueError(f"Subdomain radius must be positive, got {radius}")
        return cls(center=tuple(float(c) for c in center), radius=float(radius))

    @classmethod
    def scaled(cls, mesh: TriMesh, fraction: float) -> "Subdomain":
        """Copy of the mesh domain shrunk by ``fraction`` about its centroid."""
        if mesh.is_box:
            lo, hi = mesh.box
            mid, half = 0.5 * (lo + hi), 0.5 * fraction * (hi - lo)
            return cls(box=(tuple(mid - half), tuple(mid + half)))
        centroid = mesh.polygon.mean(axis=0)
        return cls(polygon=centroid + fraction * (mesh.polygon - centroid))

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.polygon is not None:
            return polygon_contains(self.polygon, pts, margin=-1e-12)
        if self.box is not None:
            lo, hi = np.asarray(self.box[0]), np.asarray(self.box[1])
            return np.all((pts >= lo - 1e-12) & (pts <= hi + 1e-12), axis=1)
        return np.linalg.norm(pts - np.asarray(self.center), axis=1) <= self.radius + 1e-12

    def distance_to_boundary_ok(self, mesh: TriMesh) -> bool:
        """True if the subdomain stays a positive distance away from the domain boundary."""
        if mesh.is_box:
            lo, hi = mesh.box
            if self.box is not None:
                return bool(np.all(np.asarray(self.box[0]) > lo) and np.all(np.asarray(self.box[1]) < hi))
            c = np.asarray(self.center)
            return bool(np.all(c - self.radius > lo) and np.all(c + self.radius < hi))
        if self.polygon is not None:
            return bool(np.all(polygon_contains(mesh.polygon, self.polygon, margin=1e-12)))
        if self.center is None:
            return False
        return bool(polygon_contains(mesh.polygon, np.asarray(self.center)[None, :], margin=self.radius + 1e-12)[0])


def norm_errors(
    mesh_fine: TriMesh,
    f_fine: FeFunction,
    f_coarse: Union[FeFunction, Field],
    subdomain: Optional[Subdomain] = None,
) -> Dict[str, float]:
    """
    L2, L1 and local maximum-norm distance between two functions.

    Args:
        mesh_fine: Mesh carrying ``f_fine``; all integrals use its quadrature
        f_fine: Fine-mesh P1 function
        f_coarse: P1 function on a nested coarser mesh, or a closed-form field
        subdomain: Region for the maximum norm; the whole domain if omitted

    Returns:
        ``{"l2", "l1", "linf"}``; ``linf`` is the maximum over fine-mesh vertices
        inside the subdomain

    Raises:
        MeshMismatch: If the meshes are not nested
    """
    rule = rule_for_dim(mesh_fine.dim)
    fine_q = interpolate_at_quadrature(f_fine, rule)

    if isinstance(f_coarse, FeFunction):
        other = prolongate(f_coarse, mesh_fine)
        other_q = interpolate_at_quadrature(other, rule)
        other_vertices = other.values
    else:
        other_q = field_at_quadrature(mesh_fine, f_coarse, rule)
        if callable(f_coarse):
            other_vertices = np.broadcast_to(
                np.asarray(f_coarse(mesh_fine.vertices), dtype=float), (mesh_fine.n_vertices,)
            )
        else:
            other_vertices = np.full(mesh_fine.n_vertices, float(f_coarse))

    diff = fine_q - other_q
    weights = mesh_fine.volumes[:, None] * rule.normalized_weights[None, :]
    l2 = float(np.sqrt(np.sum(weights * diff ** 2)))
    l1 = float(np.sum(weights * np.abs(diff)))

    inside = np.ones(mesh_fine.n_vertices, dtype=bool) if subdomain is None else subdomain.contains(mesh_fine.vertices)
    vertex_diff = np.abs(f_fine.values - other_vertices)[inside]
    linf = float(vertex_diff.max()) if vertex_diff.size else 0.0
    return {"l2": l2, "l1": l1, "linf": linf}
