"""
Quadrature rules on the reference simplex.

Points are stored in barycentric coordinates so the same rule maps onto any
cell without an explicit affine transformation.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special


@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric points and positive weights on the reference simplex.

    ``weights`` sum to the measure of the reference simplex, 1/d!.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def dim(self) -> int:
        return int(self.points.shape[1]) - 1

    @property
    def size(self) -> int:
        return int(self.weights.size)

    @property
    def normalized_weights(self) -> np.ndarray:
        """Weights rescaled to sum to one, i.e. relative to the cell volume."""
        return self.weights * math.factorial(self.dim)


# Symmetric 6-point rule of degree 4 on the triangle (two S21 orbits).
_TRI_A1 = 0.445948490915964886318329253883
_TRI_W1 = 0.223381589678011465944827187798
_TRI_A2 = 0.091576213509770743459571463402
_TRI_W2 = 0.109951743655321867638506145535


def _s21(a: float) -> np.ndarray:
    b = 1.0 - 2.0 * a
    return np.array([[a, a, b], [a, b, a], [b, a, a]])


@lru_cache(maxsize=None)
def triangle_rule() -> QuadratureRule:
    """Degree-4, 6-point rule with positive weights on the reference triangle."""
    points = np.vstack([_s21(_TRI_A1), _s21(_TRI_A2)])
    weights = 0.5 * np.array([_TRI_W1] * 3 + [_TRI_W2] * 3)
    return QuadratureRule(points=points, weights=weights, degree=4)


def _gauss_jacobi_unit(n: int, alpha: float):
    """Gauss-Jacobi nodes and weights for the weight (1 - t)**alpha on [0, 1]."""
    x, w = special.roots_jacobi(n, alpha, 0.0)
    return 0.5 * (x + 1.0), w / 2.0 ** (alpha + 1.0)


@lru_cache(maxsize=None)
def tetrahedron_rule(points_per_axis: int = 2) -> QuadratureRule:
    """
    Collapsed-coordinate (Duffy) rule on the reference tetrahedron.

    A tensor Gauss-Jacobi rule with ``n`` points per axis is exact for total
    degree ``2n - 1`` and keeps all weights positive.

    Args:
        points_per_axis: Gauss points per collapsed axis

    Returns:
        Rule with ``points_per_axis**3`` points
    """
    n = points_per_axis
    a, wa = _gauss_jacobi_unit(n, 0.0)
    b, wb = _gauss_jacobi_unit(n, 1.0)
    c, wc = _gauss_jacobi_unit(n, 2.0)

    aa, bb, cc = np.meshgrid(a, b, c, indexing="ij")
    weights = np.einsum("i,j,k->ijk", wa, wb, wc).ravel()
    x3 = cc.ravel()
    x2 = (bb * (1.0 - cc)).ravel()
    x1 = (aa * (1.0 - bb) * (1.0 - cc)).ravel()
    points = np.column_stack([1.0 - x1 - x2 - x3, x1, x2, x3])
    return QuadratureRule(points=points, weights=weights, degree=2 * n - 1)


def rule_for_dim(dim: int) -> QuadratureRule:
    """Default rule used for all volume integrals in ``dim`` dimensions."""
    if dim == 2:
        return triangle_rule()
    if dim == 3:
        return tetrahedron_rule(2)
    raise ValueError(f"Unsupported dimension: {dim}")
