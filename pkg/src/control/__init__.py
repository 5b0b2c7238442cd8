"""Control package - reduced problem, projected gradient and second-order checks."""

from .types import (
    ControlVector,
    ControlBounds,
    KktDiagnostics,
    SoscReport,
    project,
    classify_active_set,
)
from .reduced import (
    ControlProblem,
    ReducedProblem,
    cost,
    reduced_gradient,
    reduced_hessian,
    make_control_problem,
)
from .optimizer import OcpSolution, projected_gradient, solve_ocp, trace_to_jsonl
from .sosc import (
    check_sosc,
    check_sign_condition_bound,
    variational_inequality_check,
    sosc_report,
)

__all__ = [
    "ControlVector",
    "ControlBounds",
    "KktDiagnostics",
    "SoscReport",
    "project",
    "classify_active_set",
    "ControlProblem",
    "ReducedProblem",
    "cost",
    "reduced_gradient",
    "reduced_hessian",
    "make_control_problem",
    "OcpSolution",
    "projected_gradient",
    "solve_ocp",
    "trace_to_jsonl",
    "check_sosc",
    "check_sign_condition_bound",
    "variational_inequality_check",
    "sosc_report",
]
