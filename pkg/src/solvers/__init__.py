"""Solvers package - nonlinearities, Newton state solver and derived linear solves."""

from .nonlinearity import (
    Nonlinearity,
    NONLINEARITY_REGISTRY,
    make_nonlinearity,
    check_consistency,
)
from .state import (
    NewtonReport,
    SemilinearSolver,
    solve_state,
    newton_step_operator,
    solve_linearized_state,
    solve_second_linearized,
    solve_adjoint,
)

__all__ = [
    "Nonlinearity",
    "NONLINEARITY_REGISTRY",
    "make_nonlinearity",
    "check_consistency",
    "NewtonReport",
    "SemilinearSolver",
    "solve_state",
    "newton_step_operator",
    "solve_linearized_state",
    "solve_second_linearized",
    "solve_adjoint",
]
