"""
Exception hierarchy for the Dirac-source optimal control toolkit.

Bad input raises a ``ValueError`` subclass, failed numerical work raises a
``RuntimeError`` subclass. The CLI maps the two families to exit codes 2 and 1.
"""

from typing import Any, List, Optional


class DiracOcpError(Exception):
    """Base class for all errors raised by this package."""


class InvalidPolygon(DiracOcpError, ValueError):
    """Polygon is not strictly convex, not counter-clockwise, or repeats a vertex."""


class PointOutsideDomain(DiracOcpError, ValueError):
    """A query point does not lie in the closed meshed domain."""

    def __init__(self, point: Any, message: Optional[str] = None):
        self.point = point
        super().__init__(message or f"Point {tuple(point)} lies outside the domain")


class MeshMismatch(DiracOcpError, ValueError):
    """Two finite element functions live on meshes that are not nested."""


class MonotonicityViolation(DiracOcpError, ValueError):
    """A weight that must be nonnegative, such as da/dy, was negative somewhere."""


class InsufficientData(DiracOcpError, ValueError):
    """Too few usable (h, error) pairs to fit a convergence rate."""


class ParseError(DiracOcpError, ValueError):
    """A problem file could not be read or is not valid TOML."""


class ValidationError(DiracOcpError, ValueError):
    """A problem definition violates one or more invariants.

    All violations are collected, not just the first one.
    """

    def __init__(self, violations: List[str]):
        self.violations = list(violations)
        joined = "\n  - ".join(self.violations)
        super().__init__(f"Problem definition is invalid:\n  - {joined}")


class LinearSolveFailure(DiracOcpError, RuntimeError):
    """Conjugate gradients did not reach the requested tolerance."""

    def __init__(self, message: str, iterations: int = 0, residual: float = float("nan")):
        self.iterations = iterations
        self.residual = residual
        super().__init__(message)


class NonlinearSolveFailure(DiracOcpError, RuntimeError):
    """Newton's method stagnated; the attached report tells how far it got."""

    def __init__(self, message: str, report: Any = None):
        self.report = report
        super().__init__(message)


class OptimizerStalled(DiracOcpError, RuntimeError):
    """Projected gradient hit its iteration cap before reaching stationarity."""

    def __init__(
        self, message: str, diagnostics: Any = None, trace: Optional[list] = None, control: Optional[list] = None
    ):
        self.diagnostics = diagnostics
        self.trace = trace or []
        self.control = control
        super().__init__(message)


class StudyFailure(DiracOcpError, RuntimeError):
    """A convergence study aborted; ``level`` names the refinement level that failed."""

    def __init__(self, level: int, cause: Exception):
        self.level = level
        self.cause = cause
        super().__init__(f"Study aborted at level {level}: {cause}")
