"""
Second-order and variational-inequality checks at a computed control.
"""

import logging
from typing import Any, Dict, Optional

import numpy as np

from ..fem.mesh import TriMesh
from .reduced import ControlProblem, ReducedProblem
from .types import ControlBounds, SoscReport


logger = logging.getLogger(__name__)


def critical_indices(psi: np.ndarray, tau: float) -> np.ndarray:
    """Indices z with |psi_z| <= tau; ties are included."""
    return np.flatnonzero(np.abs(np.asarray(psi, dtype=float)) <= tau)


def restricted_min_eigenvalue(hessian: np.ndarray, indices: np.ndarray) -> Optional[float]:
    """Smallest eigenvalue of the principal submatrix on ``indices``; None if empty."""
    if indices.size == 0:
        return None
    sub = hessian[np.ix_(indices, indices)]
    return float(np.linalg.eigvalsh(0.5 * (sub + sub.T))[0])


def sosc_report(
    hessian: np.ndarray,
    psi: np.ndarray,
    tau: float,
    kappa_min: float,
) -> SoscReport:
    """Build a ``SoscReport`` from a Hessian and gradient that are already known."""
    indices = critical_indices(psi, tau)
    lambda_min = restricted_min_eigenvalue(hessian, indices)
    verdict = lambda_min is None or lambda_min >= kappa_min
    return SoscReport(
        tau=float(tau),
        critical_set=[int(i) for i in indices],
        lambda_min=lambda_min,
        kappa_min=float(kappa_min),
        verdict=bool(verdict),
    )


def check_sosc(
    mesh: TriMesh,
    u_bar: Any,
    problem: ControlProblem,
    tau: Optional[float] = None,
    kappa_min: Optional[float] = None,
    reduced: Optional[ReducedProblem] = None,
) -> SoscReport:
    """
    Second-order sufficient condition test on the relaxed critical subspace.

    The reduced Hessian is restricted to the coordinates with |psi_z| <= tau,
    without sign constraints, and its smallest eigenvalue is compared with
    ``kappa_min``. An empty critical set gives a positive verdict.

    Args:
        mesh: Mesh
        u_bar: Stationary control
        problem: Control problem data
        tau: Critical set width; 10 * tol_kkt if omitted
        kappa_min: Required curvature; alpha / 2 if omitted
        reduced: Reuse an existing reduced problem on ``mesh``

    Returns:
        SoscReport
    """
    tau = 10.0 * problem.tol_kkt if tau is None else float(tau)
    kappa_min = 0.5 * problem.alpha if kappa_min is None else float(kappa_min)
    reduced = reduced or ReducedProblem(mesh, problem)

    psi = reduced.reduced_gradient(u_bar)
    hessian = reduced.reduced_hessian(u_bar)
    report = sosc_report(hessian, psi, tau, kappa_min)
    report.details["hessian"] = hessian.tolist()
    logger.info(
        f"SOSC on level {mesh.level}: {len(report.critical_set)} critical point(s), "
        f"lambda_min = {report.lambda_min}, verdict = {'positive' if report.verdict else 'negative'}"
    )
    return report


def check_sign_condition_bound(
    hessian: np.ndarray,
    psi: np.ndarray,
    u_bar: Any,
    bounds: ControlBounds,
    tau: float,
    lambda_min: Optional[float],
    rng: Optional[np.random.Generator] = None,
    samples: int = 100,
    rtol: float = 1e-10,
) -> Dict[str, Any]:
    """
    Probe v^T H v >= lambda_min |v|^2 on sign-admissible directions.

    Directions are supported on the critical set, nonnegative where u_bar sits
    on its lower bound and nonpositive where it sits on its upper bound.

    Returns:
        ``{"samples", "min_ratio", "holds"}``; ``min_ratio`` is the smallest
        Rayleigh quotient seen
    """
    rng = rng or np.random.default_rng(0)
    indices = critical_indices(psi, tau)
    if indices.size == 0 or lambda_min is None:
        return {"samples": 0, "min_ratio": None, "holds": True}

    u = np.asarray(u_bar, dtype=float)
    at_lower = np.isclose(u, bounds.lower, rtol=0.0, atol=1e-10)
    at_upper = np.isclose(u, bounds.upper, rtol=0.0, atol=1e-10)

    min_ratio = np.inf
    for _ in range(samples):
        v = np.zeros_like(u)
        v[indices] = rng.standard_normal(indices.size)
        v = np.where(at_lower, np.abs(v), v)
        v = np.where(at_upper & ~at_lower, -np.abs(v), v)
        norm2 = float(v @ v)
        if norm2 == 0.0:
            continue
        min_ratio = min(min_ratio, float(v @ hessian @ v) / norm2)

    scale = max(1.0, abs(lambda_min))
    holds = bool(min_ratio >= lambda_min - rtol * scale)
    return {"samples": samples, "min_ratio": float(min_ratio), "holds": holds}


def variational_inequality_check(
    u_bar: Any,
    gradient: Any,
    bounds: ControlBounds,
    tol_kkt: float,
    samples: int = 100,
    rng: Optional[np.random.Generator] = None,
) -> Dict[str, Any]:
    """
    Sample the discrete variational inequality at ``u_bar``.

    For random admissible u: gradient . (u - u_bar) >= -10 tol_kkt |u - u_bar|.

    Returns:
        ``{"samples", "worst", "holds"}``; ``worst`` is the smallest value of
        gradient . (u - u_bar) / |u - u_bar|
    """
    rng = rng or np.random.default_rng(0)
    u_bar = np.asarray(u_bar, dtype=float)
    g = np.asarray(gradient, dtype=float)
    trials = bounds.sample(rng, samples)
    diffs = trials - u_bar[None, :]
    norms = np.linalg.norm(diffs, axis=1)
    keep = norms > 0.0
    ratios = (diffs[keep] @ g) / norms[keep]
    worst = float(ratios.min()) if ratios.size else 0.0
    return {"samples": samples, "worst": worst, "holds": bool(worst >= -10.0 * tol_kkt)}
