"""
Study plan and report models passed between the engine, the CLI and the renderers.
"""

from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field

from ..errors import ValidationError
from .problem import QUANTITIES, ProblemSpec


class StudyPlan(BaseModel):
    """
    What a refinement study solves.

    The reference level must exceed the finest measured level by at least two.
    """

    spec: ProblemSpec
    levels: List[int]
    reference_level: int
    quantities: List[str] = Field(default_factory=lambda: list(QUANTITIES))
    threads: int = 1

    @classmethod
    def from_spec(
        cls,
        spec: ProblemSpec,
        levels: Optional[List[int]] = None,
        reference_level: Optional[int] = None,
        quantities: Optional[List[str]] = None,
        threads: int = 1,
    ) -> "StudyPlan":
        """
        Build a plan, taking unset values from the ``[study]`` section.

        In three dimensions only ``state_l2`` is available; when no quantities
        are requested explicitly the list is reduced to it.
        """
        levels = sorted(levels if levels is not None else spec.study.levels)
        if reference_level is None:
            reference_level = spec.study.reference_level
        if reference_level is None and levels:
            reference_level = max(levels) + 2
        if quantities is None:
            quantities = list(spec.study.quantities)
            if spec.dimension == 3:
                quantities = [q for q in quantities if q == "state_l2"]
        plan = cls(
            spec=spec,
            levels=levels,
            reference_level=reference_level if reference_level is not None else 0,
            quantities=list(quantities),
            threads=threads,
        )
        plan.validate_plan()
        return plan

    def validate_plan(self):
        problems = []
        if not self.levels:
            problems.append("levels: at least one level is required")
        elif min(self.levels) < 0:
            problems.append("levels: levels must be nonnegative")
        elif self.reference_level < max(self.levels) + 2:
            problems.append(
                f"reference: must be at least max(levels) + 2 = {max(self.levels) + 2}, got {self.reference_level}"
            )
        if len(set(self.levels)) != len(self.levels):
            problems.append("levels: levels must be distinct")
        unknown = [q for q in self.quantities if q not in QUANTITIES]
        if unknown:
            problems.append(f"quantities: unknown {', '.join(unknown)}; choose from {', '.join(QUANTITIES)}")
        if not self.quantities:
            problems.append("quantities: at least one quantity is required")
        if self.spec.dimension == 3:
            unsupported = [q for q in self.quantities if q != "state_l2"]
            if unsupported:
                problems.append(
                    f"quantities: {', '.join(unsupported)} are only available in two dimensions"
                )
        if self.threads < 1:
            problems.append("threads: must be at least 1")
        if problems:
            raise ValidationError(problems)


class RateModel(BaseModel):
    slope: float
    intercept: float
    r2: float
    points: int


class LevelRecord(BaseModel):
    """Errors and side information of one refinement level."""

    level: int
    h: float
    errors: Dict[str, Optional[float]] = Field(default_factory=dict)
    objective: Optional[float] = None
    details: Dict[str, Any] = Field(default_factory=dict)


class ReferenceCheck(BaseModel):
    """Reference against reference - 1, compared with the coarsest measured error."""

    error: float
    coarsest: Optional[float] = None
    ratio: Optional[float] = None
    ok: bool = True


class ConvergenceReport(BaseModel):
    """
    Raw per-level data plus fitted rates.

    ``rates`` fits err ~ h^s; ``log_corrected_rates`` fits err ~ h^s |log h|^m
    with the m declared per quantity.
    ``sosc_verified`` is unset for studies without an optimal control and False
    when the second-order check failed at the reference, in which case the
    control rates do not describe a strict local minimizer.
    """

    study: str
    levels: List[LevelRecord] = Field(default_factory=list)
    reference_level: int
    reference_h: float
    quantities: List[str] = Field(default_factory=list)
    rates: Dict[str, Optional[RateModel]] = Field(default_factory=dict)
    log_corrected_rates: Dict[str, Optional[RateModel]] = Field(default_factory=dict)
    log_powers: Dict[str, int] = Field(default_factory=dict)
    monotone: Dict[str, bool] = Field(default_factory=dict)
    reference_check: Dict[str, ReferenceCheck] = Field(default_factory=dict)
    reference_objective: Optional[float] = None
    sosc: Optional[Dict[str, Any]] = None
    sosc_verified: Optional[bool] = None
    problem: Dict[str, Any] = Field(default_factory=dict)

    def errors_for(self, quantity: str) -> List[Optional[float]]:
        return [record.errors.get(quantity) for record in self.levels]

    def record(self, level: int) -> Optional[LevelRecord]:
        return next((r for r in self.levels if r.level == level), None)


def merge_reports(reports: List[ConvergenceReport]) -> ConvergenceReport:
    """Combine several study reports over the same levels into one."""
    if not reports:
        raise ValueError("Nothing to merge")
    if len(reports) == 1:
        return reports[0]
    first = reports[0]
    by_level: Dict[int, LevelRecord] = {}
    merged = ConvergenceReport(
        study="+".join(r.study for r in reports),
        reference_level=first.reference_level,
        reference_h=first.reference_h,
        problem=dict(first.problem),
    )
    for report in reports:
        for record in report.levels:
            target = by_level.setdefault(record.level, LevelRecord(level=record.level, h=record.h))
            target.errors.update(record.errors)
            target.details.update(record.details)
            if record.objective is not None:
                target.objective = record.objective
        merged.quantities.extend(q for q in report.quantities if q not in merged.quantities)
        merged.rates.update(report.rates)
        merged.log_corrected_rates.update(report.log_corrected_rates)
        merged.log_powers.update(report.log_powers)
        merged.monotone.update(report.monotone)
        merged.reference_check.update(report.reference_check)
        if report.sosc is not None:
            merged.sosc = report.sosc
        if report.sosc_verified is not None:
            merged.sosc_verified = report.sosc_verified
        if report.reference_objective is not None:
            merged.reference_objective = report.reference_objective
    merged.levels = [by_level[level] for level in sorted(by_level)]
    return merged
