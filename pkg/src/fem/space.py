"""
Continuous piecewise-linear functions with homogeneous boundary values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np

from ..errors import MeshMismatch
from .mesh import TriMesh, locate_points


@dataclass(frozen=True, eq=False)
class FeFunction:
    """Nodal coefficients of a P1 function that vanishes on the boundary."""

    mesh: TriMesh
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.mesh.n_vertices,):
            raise ValueError(
                f"Expected {self.mesh.n_vertices} nodal values, got shape {self.values.shape}"
            )
        if np.any(self.values[self.mesh.boundary] != 0.0):
            raise ValueError("Finite element functions must vanish at boundary vertices")

    @classmethod
    def zeros(cls, mesh: TriMesh) -> "FeFunction":
        return cls(mesh, np.zeros(mesh.n_vertices))

    @classmethod
    def from_interior(cls, mesh: TriMesh, coefficients: np.ndarray) -> "FeFunction":
        """Build a function from its interior degrees of freedom."""
        values = np.zeros(mesh.n_vertices)
        values[mesh.interior] = coefficients
        return cls(mesh, values)

    @property
    def interior_values(self) -> np.ndarray:
        return self.values[self.mesh.interior]

    def __add__(self, other: "FeFunction") -> "FeFunction":
        _require_same_mesh(self, other)
        return FeFunction(self.mesh, self.values + other.values)

    def __sub__(self, other: "FeFunction") -> "FeFunction":
        _require_same_mesh(self, other)
        return FeFunction(self.mesh, self.values - other.values)

    def __mul__(self, scalar: float) -> "FeFunction":
        return FeFunction(self.mesh, self.values * float(scalar))

    __rmul__ = __mul__

    def to_json(self) -> Dict[str, Any]:
        return {"mesh_level": self.mesh.level, "values": self.values.tolist()}


def _require_same_mesh(a: FeFunction, b: FeFunction):
    if a.mesh is not b.mesh:
        raise MeshMismatch("Operands live on different meshes")


def evaluate(fn: FeFunction, points: Any) -> np.ndarray:
    """
    Point values of a P1 function.

    Args:
        fn: Function to evaluate
        points: (m, d) points inside the domain

    Returns:
        (m,) values
    """
    cells, lam = locate_points(fn.mesh, points)
    return np.einsum("ma,ma->m", lam, fn.values[fn.mesh.cells[cells]])


def prolongate(fn: FeFunction, fine_mesh: TriMesh) -> FeFunction:
    """
    Represent a coarse P1 function exactly on a nested finer mesh.

    Parent vertex values are copied and every midpoint receives the average of
    its edge end points, level by level.

    Raises:
        MeshMismatch: If ``fine_mesh`` is not a refinement of ``fn.mesh``
    """
    if fn.mesh is fine_mesh:
        return fn
    if not fine_mesh.is_refinement_of(fn.mesh):
        raise MeshMismatch(
            f"Mesh at level {fine_mesh.level} is not a refinement of the mesh at level {fn.mesh.level}"
        )

    if fine_mesh.is_box:
        values = evaluate(fn, fine_mesh.vertices)
        values[fine_mesh.boundary] = 0.0
        return FeFunction(fine_mesh, values)

    chain = fine_mesh.lineage
    start = next(i for i, mesh in enumerate(chain) if mesh is fn.mesh)
    values = fn.values
    for mesh in chain[start + 1:]:
        edges = mesh.parent_edges
        midpoints = 0.5 * (values[edges[:, 0]] + values[edges[:, 1]])
        values = np.concatenate([values, midpoints])
    return FeFunction(fine_mesh, values)


def load_fe_function(path: Union[str, Path], mesh_factory) -> FeFunction:
    """
    Read a function written by ``FeFunction.to_json``.

    Args:
        path: JSON file with ``mesh_level`` and ``values``
        mesh_factory: Callable mapping a level to the matching mesh

    Returns:
        The function on the rebuilt mesh
    """
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    mesh = mesh_factory(int(data["mesh_level"]))
    return FeFunction(mesh, np.asarray(data["values"], dtype=float))


__all__ = ["FeFunction", "evaluate", "prolongate", "load_fe_function"]
