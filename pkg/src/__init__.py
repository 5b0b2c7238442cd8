"""
dirac-ocp - Optimal control of Dirac source amplitudes in semilinear elliptic problems

This module provides the main package interface: P1 finite elements, the
state and adjoint solvers, the reduced control problem and refinement studies.
"""

__version__ = "0.1.0"

# Finite elements
from .fem.mesh import TriMesh, build_mesh, refine_uniform
from .fem.space import FeFunction

# Solvers
from .solvers.nonlinearity import make_nonlinearity
from .solvers.state import SemilinearSolver, solve_state, solve_adjoint

# Control
from .control.reduced import ControlProblem, ReducedProblem
from .control.optimizer import OcpSolution, solve_ocp
from .control.sosc import check_sosc

# Orchestration
from .orchestration.config import ConfigLoader
from .orchestration.problem import ProblemSpec, parse_spec, emit_spec
from .orchestration.engine import StudyEngine
from .orchestration.state import StudyPlan, ConvergenceReport

# Renderers
from .renderers.markdown import MarkdownRenderer

__all__ = [
    "__version__",
    # Finite elements
    "TriMesh",
    "build_mesh",
    "refine_uniform",
    "FeFunction",
    # Solvers
    "make_nonlinearity",
    "SemilinearSolver",
    "solve_state",
    "solve_adjoint",
    # Control
    "ControlProblem",
    "ReducedProblem",
    "OcpSolution",
    "solve_ocp",
    "check_sosc",
    # Orchestration
    "ConfigLoader",
    "ProblemSpec",
    "parse_spec",
    "emit_spec",
    "StudyEngine",
    "StudyPlan",
    "ConvergenceReport",
    # Renderers
    "MarkdownRenderer",
]
