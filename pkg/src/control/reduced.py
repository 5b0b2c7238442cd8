"""
Reduced optimal control problem over the Dirac amplitudes.

    j_h(u) = 1/2 ||S_h u - y_d||^2 + alpha/2 |u|^2

``ReducedProblem`` binds a ``ControlProblem`` to one mesh and evaluates j_h,
its gradient (through the discrete adjoint) and its Hessian (through one
linearized solve per source point).
"""

import logging
from dataclasses import dataclass, replace
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from ..fem.assembly import (
    Field,
    field_at_quadrature,
    interpolate_at_quadrature,
)
from ..fem.linalg import DEFAULT_TOL_LIN
from ..fem.mesh import TriMesh
from ..fem.space import FeFunction
from ..solvers.nonlinearity import Nonlinearity
from ..solvers.state import DEFAULT_TOL_NEWTON, NewtonReport, SemilinearSolver
from .types import ControlBounds, KktDiagnostics, classify_active_set, project


logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ControlProblem:
    """Mesh-independent data of the control problem."""

    points: np.ndarray
    bounds: ControlBounds
    alpha: float
    y_d: Field
    nl: Nonlinearity
    tol_lin: float = DEFAULT_TOL_LIN
    tol_newton: float = DEFAULT_TOL_NEWTON
    tol_kkt: float = 1e-8
    max_newton_iter: int = 50
    max_halvings: int = 30
    cg_max_iter: Optional[int] = None

    def __post_init__(self):
        points = np.atleast_2d(np.asarray(self.points, dtype=float))
        object.__setattr__(self, "points", points)
        if self.alpha <= 0.0:
            raise ValueError(f"Regularization parameter alpha must be positive, got {self.alpha}")
        if points.shape[0] == 0:
            raise ValueError("At least one source point is required")
        if len(self.bounds) != points.shape[0]:
            raise ValueError(
                f"{len(self.bounds)} bound pairs given for {points.shape[0]} source points"
            )

    @property
    def count(self) -> int:
        return int(self.points.shape[0])

    def with_bounds(self, bounds: ControlBounds) -> "ControlProblem":
        return replace(self, bounds=bounds)

    def with_alpha(self, alpha: float) -> "ControlProblem":
        return replace(self, alpha=float(alpha))


class ReducedProblem:
    """
    The reduced functional j_h on one mesh.

    The last state and adjoint are cached by control, and the last converged
    state seeds the next Newton solve.
    Every state gets one extra Newton step past the tolerance so that cost
    differences between nearby controls are not swamped by solver noise.
    """

    def __init__(self, mesh: TriMesh, problem: ControlProblem):
        self.mesh = mesh
        self.problem = problem
        self.solver = SemilinearSolver(
            mesh,
            problem.nl,
            problem.points,
            tol_newton=problem.tol_newton,
            tol_lin=problem.tol_lin,
            max_newton_iter=problem.max_newton_iter,
            max_halvings=problem.max_halvings,
            cg_max_iter=problem.cg_max_iter,
            polish=True,
        )
        self.sources = self.solver.sources
        self._y_d_quad = field_at_quadrature(mesh, problem.y_d, self.solver.rule)
        self._quad_weights = mesh.volumes[:, None] * self.solver.rule.normalized_weights[None, :]
        self._states: Dict[bytes, Tuple[FeFunction, NewtonReport]] = {}
        self._adjoints: Dict[bytes, FeFunction] = {}
        self._warm: Optional[FeFunction] = None
        self.state_solves = 0

    @staticmethod
    def _key(u: np.ndarray) -> bytes:
        return np.ascontiguousarray(u, dtype=float).tobytes()

    def _as_control(self, u: Any) -> np.ndarray:
        u = np.asarray(u, dtype=float).reshape(-1)
        if u.size != self.problem.count:
            raise ValueError(f"Expected {self.problem.count} amplitudes, got {u.size}")
        return u

    def warm_start(self, y0: Optional[FeFunction]):
        """Use ``y0`` (on this mesh) as the next Newton initial guess."""
        self._warm = y0

    def state(self, u: Any) -> Tuple[FeFunction, NewtonReport]:
        u = self._as_control(u)
        key = self._key(u)
        if key not in self._states:
            # Only the most recent control is kept.
            self._states.clear()
            self._adjoints.clear()
            self._states[key] = self.solver.solve_state(u, y0=self._warm)
            self._warm = self._states[key][0]
            self.state_solves += 1
        return self._states[key]

    def adjoint(self, u: Any) -> FeFunction:
        u = self._as_control(u)
        y, _ = self.state(u)
        key = self._key(u)
        if key not in self._adjoints:
            self._adjoints[key] = self.solver.solve_adjoint(y, self.problem.y_d)
        return self._adjoints[key]

    def tracking(self, y: FeFunction) -> float:
        """1/2 ||y - y_d||^2 by quadrature."""
        diff = interpolate_at_quadrature(y, self.solver.rule) - self._y_d_quad
        return 0.5 * float(np.sum(self._quad_weights * diff ** 2))

    def cost(self, u: Any) -> float:
        u = self._as_control(u)
        y, _ = self.state(u)
        return self.tracking(y) + 0.5 * self.problem.alpha * float(u @ u)

    def adjoint_point_values(self, u: Any) -> np.ndarray:
        """p_h(z) for every source point, read from the load cells."""
        return self.sources.values(self.adjoint(u))

    def reduced_gradient(self, u: Any) -> np.ndarray:
        u = self._as_control(u)
        return self.adjoint_point_values(u) + self.problem.alpha * u

    def linearized_states(self, u: Any) -> list:
        """phi_{e_z} for every unit direction e_z."""
        y, _ = self.state(u)
        return self.solver.solve_linearized_many(y, np.eye(self.problem.count))

    def reduced_hessian(self, u: Any) -> np.ndarray:
        """
        Hessian of j_h at ``u``.

        H_zw = (phi_z, phi_w) + alpha delta_zw - integral(p a_yy(., y) phi_z phi_w)

        Returns:
            Symmetric (count, count) matrix
        """
        u = self._as_control(u)
        y, _ = self.state(u)
        p = self.adjoint(u)
        rule = self.solver.rule
        phis = self.linearized_states(u)
        phi_q = np.stack([interpolate_at_quadrature(phi, rule) for phi in phis])

        y_q = interpolate_at_quadrature(y, rule)
        p_q = interpolate_at_quadrature(p, rule)
        curvature = p_q * self.problem.nl.a_yy(self.solver.x_quad, y_q)
        weights = self._quad_weights * (1.0 - curvature)

        hessian = np.einsum("zcq,cq,wcq->zw", phi_q, weights, phi_q)
        hessian += self.problem.alpha * np.eye(self.problem.count)
        return 0.5 * (hessian + hessian.T)

    def diagnostics(self, u: Any, bounds: Optional[ControlBounds] = None) -> KktDiagnostics:
        """Projection residual, psi and active set at ``u``."""
        u = self._as_control(u)
        bounds = bounds or self.problem.bounds
        p_z = self.adjoint_point_values(u)
        psi = p_z + self.problem.alpha * u
        target = project(-p_z / self.problem.alpha, bounds)
        return KktDiagnostics(
            psi=psi,
            projection_residual=float(np.max(np.abs(u - target))),
            active_set=classify_active_set(u, psi, bounds),
            objective=self.cost(u),
        )


def cost(mesh: TriMesh, u: Any, problem: ControlProblem) -> float:
    return ReducedProblem(mesh, problem).cost(u)


def reduced_gradient(mesh: TriMesh, u: Any, problem: ControlProblem) -> np.ndarray:
    return ReducedProblem(mesh, problem).reduced_gradient(u)


def reduced_hessian(mesh: TriMesh, u: Any, problem: ControlProblem) -> np.ndarray:
    return ReducedProblem(mesh, problem).reduced_hessian(u)


def make_control_problem(
    points: Sequence[Sequence[float]],
    lower: Any,
    upper: Any,
    alpha: float,
    y_d: Field,
    nl: Nonlinearity,
    **tolerances,
) -> ControlProblem:
    """Convenience constructor broadcasting scalar bounds over the points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    count = pts.shape[0]
    bounds = ControlBounds(
        np.broadcast_to(np.asarray(lower, dtype=float), (count,)),
        np.broadcast_to(np.asarray(upper, dtype=float), (count,)),
    )
    return ControlProblem(points=pts, bounds=bounds, alpha=float(alpha), y_d=y_d, nl=nl, **tolerances)
