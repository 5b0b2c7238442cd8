"""
Discrete semilinear state equation with Dirac sources and its derived solves.

For a fixed mesh, nonlinearity and ordered source set, ``SemilinearSolver``
caches the stiffness matrix, mass matrix and source locations, and provides:

- ``solve_state``: damped Newton for  K y + N(y) = sum_z u_z phi(z)
- ``newton_step_operator``: K + M[a_y(., y)]
- ``solve_linearized_state``: derivative of the control-to-state map
- ``solve_second_linearized``: second derivative of the control-to-state map
- ``solve_adjoint``: adjoint state for the tracking functional
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import LinearSolveFailure, MeshMismatch, NonlinearSolveFailure
from ..fem.assembly import (
    Field,
    SparseOperator,
    SourceLocations,
    assemble_mass,
    assemble_stiffness,
    field_at_quadrature,
    interpolate_at_quadrature,
    load_from_quadrature_values,
    locate_sources,
    quadrature_points,
    weighted_mass_from_values,
)
from ..fem.linalg import DEFAULT_TOL_LIN, solve_spd
from ..fem.mesh import TriMesh
from ..fem.quadrature import rule_for_dim
from ..fem.space import FeFunction
from .nonlinearity import Nonlinearity


logger = logging.getLogger(__name__)

DEFAULT_TOL_NEWTON = 1e-10


@dataclass
class NewtonReport:
    """Outcome of a Newton solve."""

    iterations: int = 0
    residual: float = float("inf")
    damping_steps: int = 0
    converged: bool = False
    history: List[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "residual": self.residual,
            "damping_steps": self.damping_steps,
            "converged": self.converged,
            "history": list(self.history),
        }


class SemilinearSolver:
    """
    Solver for the discrete state, linearized, second-linearized and adjoint problems.

    Instances are read-only after construction apart from lazily built caches,
    so one solver can serve many solves on the same mesh.
    """

    def __init__(
        self,
        mesh: TriMesh,
        nl: Nonlinearity,
        points: Optional[Sequence[Sequence[float]]] = None,
        tol_newton: float = DEFAULT_TOL_NEWTON,
        tol_lin: float = DEFAULT_TOL_LIN,
        max_newton_iter: int = 50,
        max_halvings: int = 30,
        cg_max_iter: Optional[int] = None,
        polish: bool = False,
    ):
        """
        Initialize the solver.

        Args:
            mesh: Mesh of the discrete problem
            nl: Monotone nonlinearity
            points: Ordered Dirac points, strictly inside the domain; only the
                adjoint and second-linearized solves work without them
            tol_newton: Max-norm tolerance on the algebraic Newton residual
            tol_lin: Relative tolerance of every CG solve
            max_newton_iter: Newton iteration cap
            max_halvings: Maximum step halvings per Newton iteration
            cg_max_iter: Optional CG iteration cap
            polish: After convergence, take one more full Newton step and keep
                it if the residual drops
        """
        self.mesh = mesh
        self.nl = nl
        self.tol_newton = tol_newton
        self.tol_lin = tol_lin
        self.max_newton_iter = max_newton_iter
        self.max_halvings = max_halvings
        self.cg_max_iter = cg_max_iter
        self.polish = polish
        self.rule = rule_for_dim(mesh.dim)
        self.sources: Optional[SourceLocations] = None if points is None else locate_sources(mesh, points)

    @cached_property
    def stiffness(self) -> SparseOperator:
        return assemble_stiffness(self.mesh)

    @cached_property
    def mass(self) -> SparseOperator:
        return assemble_mass(self.mesh)

    @cached_property
    def x_quad(self) -> np.ndarray:
        return quadrature_points(self.mesh, self.rule)

    def _check_mesh(self, fn: FeFunction):
        if fn.mesh is not self.mesh:
            raise MeshMismatch("Function does not live on the solver mesh")

    def _require_sources(self) -> SourceLocations:
        if self.sources is None:
            raise ValueError("This solve needs source points; pass them to SemilinearSolver")
        return self.sources

    def _solve(self, op: SparseOperator, rhs: np.ndarray) -> np.ndarray:
        return solve_spd(op, rhs, tol_lin=self.tol_lin, max_iter=self.cg_max_iter)

    def residual(self, y: FeFunction, load: np.ndarray) -> np.ndarray:
        """Algebraic residual  K y + N(y) - F  on the interior dofs."""
        y_q = interpolate_at_quadrature(y, self.rule)
        nonlinear = load_from_quadrature_values(self.mesh, self.nl.a(self.x_quad, y_q), self.rule)
        return self.stiffness @ y.interior_values + nonlinear - load

    def newton_step_operator(self, y_h: FeFunction) -> SparseOperator:
        """
        Jacobian of the discrete state equation at ``y_h``.

        Raises:
            MonotonicityViolation: If da/dy(x, y_h) < 0 at a quadrature point
        """
        self._check_mesh(y_h)
        w = self.nl.a_y(self.x_quad, interpolate_at_quadrature(y_h, self.rule))
        return (self.stiffness + weighted_mass_from_values(self.mesh, w, self.rule)).tocsr()

    def solve_state(self, u: Any, y0: Optional[FeFunction] = None) -> Tuple[FeFunction, NewtonReport]:
        """
        Damped Newton solve of the discrete state equation.

        Each step is accepted once the max-norm residual decreases, halving the
        step length up to ``max_halvings`` times.

        Args:
            u: Control amplitudes, one per source point
            y0: Initial guess; zero if omitted

        Returns:
            (state, report)

        Raises:
            NonlinearSolveFailure: If Newton stagnates or runs out of iterations
        """
        u = np.asarray(u, dtype=float).reshape(-1)
        if not np.all(np.isfinite(u)):
            raise ValueError("Control amplitudes must be finite")
        load = self._require_sources().load(u)
        y = FeFunction.zeros(self.mesh) if y0 is None else y0
        self._check_mesh(y)

        report = NewtonReport()
        r = self.residual(y, load)
        r_norm = float(np.max(np.abs(r))) if r.size else 0.0

        for iteration in range(1, self.max_newton_iter + 1):
            report.iterations = iteration
            report.history.append(r_norm)
            report.residual = r_norm
            logger.debug(f"Newton iteration {iteration}: residual {r_norm:.3e}")
            if r_norm <= self.tol_newton:
                report.converged = True
                break

            delta = self._solve(self.newton_step_operator(y), -r)
            step = 1.0
            for _ in range(self.max_halvings + 1):
                trial = FeFunction.from_interior(self.mesh, y.interior_values + step * delta)
                r_trial = self.residual(trial, load)
                trial_norm = float(np.max(np.abs(r_trial)))
                if trial_norm < r_norm:
                    break
                step *= 0.5
                report.damping_steps += 1
            else:
                raise NonlinearSolveFailure(
                    f"Newton stagnated at residual {r_norm:.3e} after {iteration} iterations",
                    report=report,
                )
            y, r, r_norm = trial, r_trial, trial_norm

        if not report.converged:
            raise NonlinearSolveFailure(
                f"Newton did not reach {self.tol_newton:.1e} in {self.max_newton_iter} iterations "
                f"(residual {r_norm:.3e})",
                report=report,
            )
        if self.polish and r_norm > 0.0:
            y = self._polish(y, r, r_norm, load, report)
        logger.debug(
            f"State solved on level {self.mesh.level} in {report.iterations} iterations "
            f"(residual {report.residual:.2e})"
        )
        return y, report

    def _polish(
        self, y: FeFunction, r: np.ndarray, r_norm: float, load: np.ndarray, report: NewtonReport
    ) -> FeFunction:
        """One undamped Newton step past the tolerance; the iteration count is unchanged."""
        try:
            delta = self._solve(self.newton_step_operator(y), -r)
        except LinearSolveFailure:
            return y
        trial = FeFunction.from_interior(self.mesh, y.interior_values + delta)
        trial_norm = float(np.max(np.abs(self.residual(trial, load))))
        if not trial_norm < r_norm:
            return y
        logger.debug(f"Polishing step: residual {r_norm:.3e} -> {trial_norm:.3e}")
        report.residual = trial_norm
        return trial

    def solve_linearized_state(self, y_h: FeFunction, v: Any) -> FeFunction:
        """Solve (K + M[a_y(., y_h)]) phi = sum_z v_z phi(z)."""
        rhs = self._require_sources().load(v)
        return FeFunction.from_interior(self.mesh, self._solve(self.newton_step_operator(y_h), rhs))

    def solve_linearized_many(self, y_h: FeFunction, directions: np.ndarray) -> List[FeFunction]:
        """Linearized solves for the rows of ``directions`` sharing one Jacobian."""
        op = self.newton_step_operator(y_h)
        return [
            FeFunction.from_interior(self.mesh, self._solve(op, self._require_sources().load(v)))
            for v in np.atleast_2d(directions)
        ]

    def solve_second_linearized(self, y_h: FeFunction, phi_v: FeFunction, phi_w: FeFunction) -> FeFunction:
        """Solve (K + M[a_y(., y_h)]) varphi = -integral(a_yy(., y_h) phi_v phi_w phi_i)."""
        for fn in (y_h, phi_v, phi_w):
            self._check_mesh(fn)
        y_q = interpolate_at_quadrature(y_h, self.rule)
        density = (
            self.nl.a_yy(self.x_quad, y_q)
            * interpolate_at_quadrature(phi_v, self.rule)
            * interpolate_at_quadrature(phi_w, self.rule)
        )
        rhs = -load_from_quadrature_values(self.mesh, density, self.rule)
        return FeFunction.from_interior(self.mesh, self._solve(self.newton_step_operator(y_h), rhs))

    def solve_adjoint(self, y_h: FeFunction, y_d: Field) -> FeFunction:
        """Solve (K + M[a_y(., y_h)]) p = integral((y_h - y_d) phi_i)."""
        self._check_mesh(y_h)
        density = interpolate_at_quadrature(y_h, self.rule) - field_at_quadrature(self.mesh, y_d, self.rule)
        rhs = load_from_quadrature_values(self.mesh, density, self.rule)
        return FeFunction.from_interior(self.mesh, self._solve(self.newton_step_operator(y_h), rhs))


def solve_state(
    mesh: TriMesh,
    points: Sequence[Sequence[float]],
    u: Any,
    nl: Nonlinearity,
    tol_newton: float = DEFAULT_TOL_NEWTON,
    **kwargs,
) -> Tuple[FeFunction, NewtonReport]:
    """Solve the discrete semilinear state equation; see ``SemilinearSolver.solve_state``."""
    y0 = kwargs.pop("y0", None)
    return SemilinearSolver(mesh, nl, points, tol_newton=tol_newton, **kwargs).solve_state(u, y0=y0)


def newton_step_operator(mesh: TriMesh, y_h: FeFunction, nl: Nonlinearity) -> SparseOperator:
    """Newton operator K + M[a_y(., y_h)] on the interior dofs."""
    if y_h.mesh is not mesh:
        raise MeshMismatch("State does not live on the given mesh")
    rule = rule_for_dim(mesh.dim)
    w = nl.a_y(quadrature_points(mesh, rule), interpolate_at_quadrature(y_h, rule))
    return (assemble_stiffness(mesh) + weighted_mass_from_values(mesh, w, rule)).tocsr()


def solve_linearized_state(
    mesh: TriMesh, y_h: FeFunction, nl: Nonlinearity, v: Any, points: Sequence[Sequence[float]], **kwargs
) -> FeFunction:
    return SemilinearSolver(mesh, nl, points, **kwargs).solve_linearized_state(y_h, v)


def solve_second_linearized(
    mesh: TriMesh, y_h: FeFunction, nl: Nonlinearity, phi_v: FeFunction, phi_w: FeFunction, **kwargs
) -> FeFunction:
    return SemilinearSolver(mesh, nl, **kwargs).solve_second_linearized(y_h, phi_v, phi_w)


def solve_adjoint(mesh: TriMesh, y_h: FeFunction, nl: Nonlinearity, y_d: Field, **kwargs) -> FeFunction:
    return SemilinearSolver(mesh, nl, **kwargs).solve_adjoint(y_h, y_d)
