"""
Simplicial meshes - construction, uniform refinement and point location.

Two families are supported:

- 2-D: fan triangulation of a strictly convex polygon followed by red (4-way)
  refinement. Every refined mesh keeps a pointer to its parent together with the
  edge lineage of the new midpoint vertices, which makes prolongation exact and
  point location a short descent through the hierarchy.
- 3-D: structured Kuhn meshes of a box (six tetrahedra per cube). The family is
  nested under dyadic refinement, so refining regenerates the box at twice the
  resolution.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import InvalidPolygon, PointOutsideDomain


logger = logging.getLogger(__name__)

TOL_GEOM = 1e-10

# Axis orderings of the Kuhn simplices, in the order cells are emitted per cube.
_KUHN_PATHS: List[Tuple[int, int, int]] = list(itertools.permutations(range(3)))
_KUHN_LOOKUP = np.full(27, -1, dtype=np.int64)
for _k, _path in enumerate(_KUHN_PATHS):
    _KUHN_LOOKUP[_path[0] * 9 + _path[1] * 3 + _path[2]] = _k


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Conforming simplicial mesh with homogeneous-Dirichlet boundary flags.

    ``cells`` holds (d+1)-tuples of vertex indices. For red-refined meshes the
    vertices ``parent.n_vertices + k`` are midpoints of ``parent_edges[k]`` and
    ``child_cells[c]`` lists the four children of parent cell ``c``.
    """

    vertices: np.ndarray
    cells: np.ndarray
    boundary: np.ndarray
    level: int
    h: float
    polygon: Optional[np.ndarray] = None
    box: Optional[Tuple[np.ndarray, np.ndarray]] = None
    parent: Optional["TriMesh"] = field(default=None, repr=False)
    parent_edges: Optional[np.ndarray] = field(default=None, repr=False)
    child_cells: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return int(self.vertices.shape[1])

    @property
    def n_vertices(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def n_cells(self) -> int:
        return int(self.cells.shape[0])

    @property
    def is_box(self) -> bool:
        return self.box is not None

    @property
    def divisions(self) -> int:
        """Cells per side of a structured box mesh."""
        return 2 ** self.level

    @cached_property
    def interior(self) -> np.ndarray:
        """Indices of the free (non-boundary) vertices, in increasing order."""
        return np.flatnonzero(~self.boundary)

    @cached_property
    def dof_map(self) -> np.ndarray:
        """Vertex index -> interior dof index, -1 on the boundary."""
        dofs = np.full(self.n_vertices, -1, dtype=np.int64)
        dofs[self.interior] = np.arange(self.interior.size)
        return dofs

    @cached_property
    def jacobians(self) -> np.ndarray:
        """Affine maps of the cells, columns ``P_i - P_0``, shape (n_cells, d, d)."""
        corners = self.vertices[self.cells]
        return np.transpose(corners[:, 1:, :] - corners[:, :1, :], (0, 2, 1))

    @cached_property
    def inverse_jacobians(self) -> np.ndarray:
        return np.linalg.inv(self.jacobians)

    @cached_property
    def volumes(self) -> np.ndarray:
        return np.abs(np.linalg.det(self.jacobians)) / math.factorial(self.dim)

    @cached_property
    def diameters(self) -> np.ndarray:
        corners = self.vertices[self.cells]
        longest = np.zeros(self.n_cells)
        for i, j in itertools.combinations(range(self.dim + 1), 2):
            longest = np.maximum(longest, np.linalg.norm(corners[:, i] - corners[:, j], axis=1))
        return longest

    @cached_property
    def gradients(self) -> np.ndarray:
        """Constant gradients of the P1 basis functions, shape (n_cells, d+1, d)."""
        ref = np.vstack([-np.ones((1, self.dim)), np.eye(self.dim)])
        # grad(lambda) = ref @ J^{-1}
        return np.einsum("ak,ckd->cad", ref, self.inverse_jacobians)

    @property
    def lineage(self) -> List["TriMesh"]:
        """Meshes from the coarsest ancestor down to this one."""
        chain = [self]
        while chain[-1].parent is not None:
            chain.append(chain[-1].parent)
        return chain[::-1]

    def is_refinement_of(self, other: "TriMesh") -> bool:
        """True if ``self`` is ``other`` or obtained from it by uniform refinement."""
        if self.is_box or other.is_box:
            return (
                self.is_box and other.is_box
                and self.level >= other.level
                and np.allclose(self.box[0], other.box[0])
                and np.allclose(self.box[1], other.box[1])
            )
        return any(mesh is other for mesh in self.lineage)


@dataclass(frozen=True)
class PointLocation:
    """Containing cell of a point and its barycentric coordinates there."""

    cell_index: int
    barycentric: Tuple[float, ...]


def _mesh_size(vertices: np.ndarray, cells: np.ndarray) -> float:
    corners = vertices[cells]
    longest = 0.0
    for i, j in itertools.combinations(range(cells.shape[1]), 2):
        longest = max(longest, float(np.max(np.linalg.norm(corners[:, i] - corners[:, j], axis=1))))
    return longest


def validate_convex_polygon(vertices_ccw: Sequence[Sequence[float]]) -> np.ndarray:
    """
    Check that a vertex list describes a strictly convex, counter-clockwise polygon.

    Args:
        vertices_ccw: Polygon corners in counter-clockwise order

    Returns:
        The corners as an (n, 2) float array

    Raises:
        InvalidPolygon: On too few, repeated, collinear, reflex or clockwise corners
    """
    pts = np.asarray(vertices_ccw, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise InvalidPolygon("Polygon vertices must be a list of 2-D points")
    n = pts.shape[0]
    if n < 3:
        raise InvalidPolygon(f"A polygon needs at least 3 vertices, got {n}")

    for i, j in itertools.combinations(range(n), 2):
        if np.linalg.norm(pts[i] - pts[j]) <= TOL_GEOM:
            raise InvalidPolygon(f"Polygon vertices {i} and {j} coincide at {tuple(pts[i])}")

    edges = np.roll(pts, -1, axis=0) - pts
    turns = edges[:, 0] * np.roll(edges, -1, axis=0)[:, 1] - edges[:, 1] * np.roll(edges, -1, axis=0)[:, 0]
    if np.all(turns < -TOL_GEOM):
        raise InvalidPolygon("Polygon vertices are ordered clockwise; counter-clockwise is required")
    if not np.all(turns > TOL_GEOM):
        bad = int(np.flatnonzero(turns <= TOL_GEOM)[0])
        raise InvalidPolygon(
            f"Polygon is not strictly convex at vertex {(bad + 1) % n}"
        )

    # A star-shaped winding can turn left everywhere and still self-intersect.
    total_turn = np.sum(np.arctan2(turns, np.einsum("ij,ij->i", edges, np.roll(edges, -1, axis=0))))
    if not math.isclose(total_turn, 2.0 * math.pi, abs_tol=1e-6):
        raise InvalidPolygon("Polygon winds more than once around its interior")
    return pts


def polygon_contains(polygon: np.ndarray, points: np.ndarray, margin: float = 0.0) -> np.ndarray:
    """
    Test points against a convex counter-clockwise polygon.

    Args:
        polygon: (n, 2) corners
        points: (m, 2) query points
        margin: Required distance to every edge; negative values widen the polygon

    Returns:
        Boolean mask of the points lying at least ``margin`` inside
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    starts = polygon
    edges = np.roll(polygon, -1, axis=0) - polygon
    lengths = np.linalg.norm(edges, axis=1)
    rel = pts[:, None, :] - starts[None, :, :]
    signed = (edges[None, :, 0] * rel[:, :, 1] - edges[None, :, 1] * rel[:, :, 0]) / lengths[None, :]
    return np.all(signed >= margin, axis=1)


def triangulate_polygon(vertices_ccw: Sequence[Sequence[float]]) -> TriMesh:
    """
    Fan-triangulate a strictly convex polygon from its first vertex.

    Args:
        vertices_ccw: Polygon corners in counter-clockwise order

    Returns:
        Level-0 mesh with every vertex flagged as boundary
    """
    pts = validate_convex_polygon(vertices_ccw)
    n = pts.shape[0]
    cells = np.array([[0, i, i + 1] for i in range(1, n - 1)], dtype=np.int64)
    mesh = TriMesh(
        vertices=pts.copy(),
        cells=cells,
        boundary=np.ones(n, dtype=bool),
        level=0,
        h=_mesh_size(pts, cells),
        polygon=pts.copy(),
    )
    logger.debug(f"Fan triangulation: {mesh.n_cells} cells, h={mesh.h:.4g}")
    return mesh


def box_mesh(lower: Sequence[float], upper: Sequence[float], level: int = 0) -> TriMesh:
    """
    Structured Kuhn tetrahedral mesh of an axis-aligned box.

    Args:
        lower: Lower corner (x, y, z)
        upper: Upper corner (x, y, z)
        level: Refinement level; the box is cut into 2**level cubes per side

    Returns:
        Mesh with six tetrahedra per cube
    """
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    if lo.shape != (3,) or hi.shape != (3,) or np.any(hi - lo <= TOL_GEOM):
        raise InvalidPolygon(f"Invalid box: lower={lower}, upper={upper}")

    n = 2 ** level
    axes = [np.linspace(lo[k], hi[k], n + 1) for k in range(3)]
    zz, yy, xx = np.meshgrid(axes[2], axes[1], axes[0], indexing="ij")
    vertices = np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])

    stride = np.array([1, n + 1, (n + 1) ** 2], dtype=np.int64)
    kk, jj, ii = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
    origin = ii.ravel() * stride[0] + jj.ravel() * stride[1] + kk.ravel() * stride[2]

    cells = np.empty((origin.size, len(_KUHN_PATHS), 4), dtype=np.int64)
    for k, path in enumerate(_KUHN_PATHS):
        corner = origin.copy()
        cells[:, k, 0] = corner
        for step, axis in enumerate(path, start=1):
            corner = corner + stride[axis]
            cells[:, k, step] = corner
    cells = cells.reshape(-1, 4)

    on_face = np.zeros(vertices.shape[0], dtype=bool)
    for k in range(3):
        on_face |= np.isclose(vertices[:, k], lo[k]) | np.isclose(vertices[:, k], hi[k])

    return TriMesh(
        vertices=vertices,
        cells=cells,
        boundary=on_face,
        level=level,
        h=float(np.linalg.norm(hi - lo)) / n,
        box=(lo, hi),
    )


def refine_uniform(mesh: TriMesh) -> TriMesh:
    """
    Refine every cell once.

    Triangles are split into four congruent children through their edge
    midpoints; shared midpoints are created once. Box meshes are regenerated at
    twice the resolution.

    Args:
        mesh: Mesh to refine

    Returns:
        Child mesh at ``mesh.level + 1`` with ``h`` halved
    """
    if mesh.is_box:
        return box_mesh(mesh.box[0], mesh.box[1], mesh.level + 1)

    cells = mesh.cells
    local_edges = np.array([[0, 1], [1, 2], [2, 0]])
    pairs = np.sort(cells[:, local_edges].reshape(-1, 2), axis=1)
    edges, inverse, counts = np.unique(pairs, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)

    nv = mesh.n_vertices
    midpoints = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    vertices = np.vstack([mesh.vertices, midpoints])
    boundary = np.concatenate([mesh.boundary, counts == 1])

    mid = (nv + inverse).reshape(-1, 3)
    v0, v1, v2 = cells[:, 0], cells[:, 1], cells[:, 2]
    m01, m12, m20 = mid[:, 0], mid[:, 1], mid[:, 2]
    children = np.stack(
        [
            np.column_stack([v0, m01, m20]),
            np.column_stack([m01, v1, m12]),
            np.column_stack([m20, m12, v2]),
            np.column_stack([m01, m12, m20]),
        ],
        axis=1,
    )

    refined = TriMesh(
        vertices=vertices,
        cells=children.reshape(-1, 3),
        boundary=boundary,
        level=mesh.level + 1,
        h=mesh.h / 2.0,
        polygon=mesh.polygon,
        parent=mesh,
        parent_edges=edges,
        child_cells=np.arange(4 * mesh.n_cells, dtype=np.int64).reshape(-1, 4),
    )
    logger.debug(f"Refined to level {refined.level}: {refined.n_cells} cells")
    return refined


def build_mesh(
    level: int,
    polygon: Optional[Sequence[Sequence[float]]] = None,
    box: Optional[Tuple[Sequence[float], Sequence[float]]] = None,
) -> TriMesh:
    """
    Build the mesh of a domain at a given refinement level.

    Args:
        level: Number of uniform refinements of the initial mesh
        polygon: Convex polygon corners (2-D)
        box: (lower, upper) corners of a box (3-D)

    Returns:
        Refined mesh
    """
    if box is not None:
        return box_mesh(box[0], box[1], level)
    if polygon is None:
        raise ValueError("Either a polygon or a box is required to build a mesh")
    mesh = triangulate_polygon(polygon)
    for _ in range(level):
        mesh = refine_uniform(mesh)
    return mesh


def _barycentric(mesh: TriMesh, cell_index: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of ``points[i]`` with respect to ``cell_index[..., i]``."""
    origin = mesh.vertices[mesh.cells[cell_index, 0]]
    rel = points - origin
    tail = np.einsum("...ij,...j->...i", mesh.inverse_jacobians[cell_index], rel)
    return np.concatenate([1.0 - tail.sum(axis=-1, keepdims=True), tail], axis=-1)


def _locate_brute_force(mesh: TriMesh, points: np.ndarray, chunk: int = 256) -> np.ndarray:
    cells = np.full(points.shape[0], -1, dtype=np.int64)
    all_cells = np.arange(mesh.n_cells)
    for start in range(0, points.shape[0], chunk):
        block = points[start:start + chunk]
        lam = _barycentric(mesh, all_cells[:, None], block[None, :, :])
        score = lam.min(axis=-1)
        best = np.argmax(score, axis=0)
        found = score[best, np.arange(block.shape[0])] >= -TOL_GEOM
        cells[start:start + chunk] = np.where(found, best, -1)
    return cells


def _locate_box(mesh: TriMesh, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    lo, hi = mesh.box
    n = mesh.divisions
    scaled = (points - lo) / (hi - lo) * n
    slack = TOL_GEOM / np.min(hi - lo) * n
    inside = np.all((scaled >= -slack) & (scaled <= n + slack), axis=1)
    cube = np.clip(np.floor(scaled), 0, n - 1).astype(np.int64)
    local = np.clip(scaled - cube, 0.0, 1.0)
    path = np.argsort(-local, axis=1, kind="stable")
    code = path[:, 0] * 9 + path[:, 1] * 3 + path[:, 2]
    cube_index = cube[:, 0] + n * cube[:, 1] + n * n * cube[:, 2]
    cells = cube_index * len(_KUHN_PATHS) + _KUHN_LOOKUP[code]
    cells = np.where(inside, cells, -1)
    return cells, inside


def locate_points(mesh: TriMesh, points: Any) -> Tuple[np.ndarray, np.ndarray]:
    """
    Locate many points at once.

    Args:
        mesh: Mesh to search
        points: (m, d) query points

    Returns:
        (cells, barycentric) with shapes (m,) and (m, d+1)

    Raises:
        PointOutsideDomain: If any point is outside the closed domain
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != mesh.dim:
        raise ValueError(f"Expected {mesh.dim}-D points, got shape {pts.shape}")

    if mesh.is_box:
        cells, _ = _locate_box(mesh, pts)
    else:
        chain = mesh.lineage
        cells = _locate_brute_force(chain[0], pts)
        if np.all(cells >= 0):
            for fine in chain[1:]:
                candidates = fine.child_cells[cells]
                lam = _barycentric(fine, candidates, pts[:, None, :])
                pick = np.argmax(lam.min(axis=-1), axis=1)
                cells = candidates[np.arange(pts.shape[0]), pick]

    missing = np.flatnonzero(cells < 0)
    if missing.size:
        raise PointOutsideDomain(pts[missing[0]])

    lam = _barycentric(mesh, cells, pts)
    bad = np.flatnonzero(lam.min(axis=1) < -TOL_GEOM)
    if bad.size:
        raise PointOutsideDomain(pts[bad[0]])
    return cells, lam


def locate_point(mesh: TriMesh, z: Sequence[float]) -> PointLocation:
    """
    Find a cell containing ``z`` and the barycentric coordinates of ``z`` in it.

    Points on shared edges or vertices may be assigned to any containing cell.
    """
    cells, lam = locate_points(mesh, np.asarray(z, dtype=float)[None, :])
    return PointLocation(cell_index=int(cells[0]), barycentric=tuple(float(v) for v in lam[0]))


def _min_angle_degrees(mesh: TriMesh) -> float:
    corners = mesh.vertices[mesh.cells]
    if mesh.dim == 2:
        smallest = np.inf
        for i in range(3):
            a = corners[:, (i + 1) % 3] - corners[:, i]
            b = corners[:, (i + 2) % 3] - corners[:, i]
            cos = np.einsum("ij,ij->i", a, b) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            smallest = min(smallest, float(np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))).min()))
        return smallest

    # Dihedral angles: the angle between faces i and j is pi minus the angle of their normals.
    grads = mesh.gradients
    smallest = np.inf
    for i, j in itertools.combinations(range(4), 2):
        gi, gj = grads[:, i], grads[:, j]
        cos = -np.einsum("ij,ij->i", gi, gj) / (np.linalg.norm(gi, axis=1) * np.linalg.norm(gj, axis=1))
        smallest = min(smallest, float(np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))).min()))
    return smallest


def mesh_statistics(mesh: TriMesh) -> Dict[str, float]:
    """
    Geometric summary of a mesh.

    ``min_angle`` is the smallest interior angle of any triangle in 2-D and the
    smallest dihedral angle of any tetrahedron in 3-D, in degrees.
    """
    diameters = mesh.diameters
    return {
        "h": float(mesh.h),
        "min_angle": _min_angle_degrees(mesh),
        "cell_count": mesh.n_cells,
        "vertex_count": mesh.n_vertices,
        "quasi_uniformity": float(diameters.max() / diameters.min()),
    }


def mesh_to_json(mesh: TriMesh) -> Dict[str, Any]:
    """Plain JSON-serializable description of a mesh for external viewers."""
    return {
        "level": mesh.level,
        "vertices": mesh.vertices.tolist(),
        "cells": mesh.cells.tolist(),
        "boundary": mesh.boundary.tolist(),
    }
