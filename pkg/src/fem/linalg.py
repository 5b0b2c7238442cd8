"""
Jacobi-preconditioned conjugate gradients for the SPD systems of the discretization.
"""

import logging
from typing import Optional

import numpy as np
import scipy.sparse as sp

from ..errors import LinearSolveFailure


logger = logging.getLogger(__name__)

DEFAULT_TOL_LIN = 1e-12


def solve_spd(
    op: sp.spmatrix,
    rhs: np.ndarray,
    tol_lin: float = DEFAULT_TOL_LIN,
    max_iter: Optional[int] = None,
    x0: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Solve ``op @ x = rhs`` for a symmetric positive definite operator.

    Stops once the relative residual ``||rhs - op x|| / ||rhs||`` is at most
    ``tol_lin``. The iteration is sequential and deterministic.

    Args:
        op: SPD sparse operator
        rhs: Right-hand side
        tol_lin: Relative residual tolerance
        max_iter: Iteration cap; defaults to ``10 n + 100``
        x0: Optional initial guess

    Returns:
        Solution vector

    Raises:
        LinearSolveFailure: If the tolerance is not met within ``max_iter`` iterations
    """
    b = np.asarray(rhs, dtype=float)
    n = b.size
    if n == 0:
        return np.zeros(0)

    b_norm = np.linalg.norm(b)
    if b_norm == 0.0:
        return np.zeros(n)

    max_iter = max_iter if max_iter is not None else 10 * n + 100
    diag = op.diagonal()
    if np.any(diag <= 0.0):
        raise LinearSolveFailure("Operator has a nonpositive diagonal entry; it is not SPD")
    inv_diag = 1.0 / diag

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - op @ x
    target = tol_lin * b_norm
    res_norm = np.linalg.norm(r)
    if res_norm <= target:
        return x

    z = inv_diag * r
    d = z.copy()
    rz = r @ z

    for k in range(1, max_iter + 1):
        q = op @ d
        curvature = d @ q
        if curvature <= 0.0:
            raise LinearSolveFailure(
                f"Nonpositive curvature {curvature:.3e} at CG iteration {k}; operator is not SPD",
                iterations=k,
                residual=res_norm / b_norm,
            )
        step = rz / curvature
        x += step * d
        r -= step * q
        res_norm = np.linalg.norm(r)
        if res_norm <= target:
            logger.debug(f"CG converged in {k} iterations (relative residual {res_norm / b_norm:.2e})")
            return x
        z = inv_diag * r
        rz_next = r @ z
        d = z + (rz_next / rz) * d
        rz = rz_next

    raise LinearSolveFailure(
        f"CG did not reach relative residual {tol_lin:.1e} in {max_iter} iterations "
        f"(reached {res_norm / b_norm:.2e})",
        iterations=max_iter,
        residual=res_norm / b_norm,
    )
