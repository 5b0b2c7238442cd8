"""
Projected gradient solver for the box-constrained reduced problem.

Steps follow the Barzilai-Borwein rule, safeguarded by Armijo backtracking
along the projection arc. The sufficient decrease test allows for the cost
error left by the Newton tolerance. The loop stops once the projection
residual max_z |u_z - clamp(-p(z)/alpha)| drops to ``tol_kkt``.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from ..errors import OptimizerStalled
from ..fem.mesh import TriMesh
from ..fem.space import FeFunction
from .reduced import ControlProblem, ReducedProblem
from .types import ControlBounds, ControlVector, KktDiagnostics, project


logger = logging.getLogger(__name__)

STEP_MIN = 1e-12
STEP_MAX = 1e12


@dataclass
class OcpSolution:
    """Result of ``solve_ocp``."""

    control: ControlVector
    state: FeFunction
    adjoint: FeFunction
    diagnostics: KktDiagnostics
    iterations: int = 0
    state_solves: int = 0
    trace: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def objective(self) -> float:
        return float(self.diagnostics.objective)

    def __iter__(self):
        # Unpacks as (control, state, adjoint, diagnostics).
        return iter((self.control, self.state, self.adjoint, self.diagnostics))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "control": self.control.to_list(),
            "objective": self.objective,
            "iterations": self.iterations,
            "state_solves": self.state_solves,
            "diagnostics": self.diagnostics.to_dict(),
        }


def _projection_residual(u: np.ndarray, p_z: np.ndarray, alpha: float, bounds: ControlBounds) -> float:
    return float(np.max(np.abs(u - project(-p_z / alpha, bounds))))


def projected_gradient(
    reduced: ReducedProblem,
    u0: Any,
    tol_kkt: Optional[float] = None,
    max_iter: int = 500,
    armijo: float = 1e-4,
    max_backtracks: int = 50,
    bounds: Optional[ControlBounds] = None,
    on_iteration: Optional[Callable[[Dict[str, Any]], None]] = None,
) -> OcpSolution:
    """
    Run projected gradient on a bound reduced problem.

    Args:
        reduced: Reduced problem on the target mesh
        u0: Initial control; projected onto the box first
        tol_kkt: Projection-residual tolerance; the problem's tolerance if omitted
        max_iter: Outer iteration cap
        armijo: Sufficient decrease constant
        max_backtracks: Step halvings per outer iteration
        bounds: Box to search; defaults to the problem bounds
        on_iteration: Called with every trace record

    Returns:
        OcpSolution

    Raises:
        OptimizerStalled: If the residual is still above ``tol_kkt`` after ``max_iter`` iterations
    """
    problem = reduced.problem
    alpha = problem.alpha
    tol_kkt = problem.tol_kkt if tol_kkt is None else tol_kkt
    bounds = bounds or problem.bounds

    u = project(np.asarray(u0, dtype=float).reshape(-1), bounds)
    j = reduced.cost(u)
    p_z = reduced.adjoint_point_values(u)
    g = p_z + alpha * u
    step = 1.0 / alpha
    trace: List[Dict[str, Any]] = []
    accepted_step = 0.0

    for iteration in range(max_iter + 1):
        residual = _projection_residual(u, p_z, alpha, bounds)
        record = {"iter": iteration, "j": j, "proj_residual": residual, "step": accepted_step}
        trace.append(record)
        logger.debug(json.dumps(record))
        if on_iteration is not None:
            on_iteration(record)

        if residual <= tol_kkt:
            diagnostics = reduced.diagnostics(u, bounds)
            logger.info(
                f"Projected gradient converged in {iteration} iterations on level {reduced.mesh.level}: "
                f"j = {j:.6e}, residual = {residual:.2e}"
            )
            y, _ = reduced.state(u)
            return OcpSolution(
                control=ControlVector(u),
                state=y,
                adjoint=reduced.adjoint(u),
                diagnostics=diagnostics,
                iterations=iteration,
                state_solves=reduced.state_solves,
                trace=trace,
            )
        if iteration == max_iter:
            break

        trial_step = step
        accepted = False
        # Read before any trial solve evicts u from the one-entry cache.
        r_u = reduced.state(u)[1].residual
        p_l1 = float(np.sum(np.abs(reduced.adjoint(u).interior_values)))
        round_off = 1e3 * np.finfo(float).eps * max(1.0, abs(j))
        for _ in range(max_backtracks + 1):
            u_trial = project(u - trial_step * g, bounds)
            d = u_trial - u
            if not np.any(d):
                # The projected step no longer moves u.
                break
            j_trial = reduced.cost(u_trial)
            r_trial = reduced.state(u_trial)[1].residual
            # A Newton residual r moves j by at most |p|_1 |r|_inf to first order.
            slack = round_off + 2.0 * p_l1 * (r_u + r_trial)
            if j_trial <= j + armijo * float(g @ d) + slack:
                accepted = True
                break
            trial_step *= 0.5

        if not accepted:
            logger.warning(f"No sufficient decrease found at iteration {iteration}")
            break

        p_trial = reduced.adjoint_point_values(u_trial)
        g_trial = p_trial + alpha * u_trial
        s, y_diff = u_trial - u, g_trial - g
        curvature = float(s @ y_diff)
        step = float(s @ s) / curvature if curvature > 0.0 else 1.0 / alpha
        step = min(max(step, STEP_MIN), STEP_MAX)

        accepted_step = trial_step
        u, j, p_z, g = u_trial, j_trial, p_trial, g_trial

    diagnostics = reduced.diagnostics(u, bounds)
    raise OptimizerStalled(
        f"Projected gradient stopped after {len(trace) - 1} iterations with projection residual "
        f"{diagnostics.projection_residual:.3e} > {tol_kkt:.1e}",
        diagnostics=diagnostics,
        trace=trace,
        control=[float(v) for v in u],
    )


def solve_ocp(
    mesh: TriMesh,
    problem: ControlProblem,
    u0: Optional[Any] = None,
    tol_kkt: Optional[float] = None,
    max_iter: int = 500,
    armijo: float = 1e-4,
    center: Optional[Sequence[float]] = None,
    radius: Optional[float] = None,
    y0: Optional[FeFunction] = None,
    on_iteration: Optional[Callable[[Dict[str, Any]], None]] = None,
) -> OcpSolution:
    """
    Solve the discrete control problem on ``mesh``.

    With ``center`` and ``radius`` the search is restricted to the admissible
    box intersected with the max-norm ball around ``center``, which picks out
    one local minimizer.

    Args:
        mesh: Mesh
        problem: Control problem data
        u0: Initial control; the projection of zero if omitted
        tol_kkt: Projection-residual tolerance
        max_iter: Outer iteration cap
        armijo: Sufficient decrease constant
        center: Optional localization center
        radius: Optional localization radius
        y0: Optional Newton initial guess on ``mesh``
        on_iteration: Called with every trace record

    Returns:
        OcpSolution, which also unpacks as (control, state, adjoint, diagnostics)
    """
    bounds = problem.bounds
    if center is not None or radius is not None:
        if center is None or radius is None:
            raise ValueError("Localization needs both center and radius")
        bounds = bounds.localized(center, radius)

    reduced = ReducedProblem(mesh, problem)
    reduced.warm_start(y0)
    start = np.zeros(problem.count) if u0 is None else np.asarray(u0, dtype=float)
    if start.size != problem.count:
        raise ValueError(f"Initial control has {start.size} entries, expected {problem.count}")
    return projected_gradient(
        reduced,
        start,
        tol_kkt=tol_kkt,
        max_iter=max_iter,
        armijo=armijo,
        bounds=bounds,
        on_iteration=on_iteration,
    )


def trace_to_jsonl(trace: List[Dict[str, Any]]) -> str:
    """Optimizer trace as JSON lines."""
    return "".join(json.dumps(record) + "\n" for record in trace)
