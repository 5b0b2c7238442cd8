"""
Study Engine - Mesh-refinement studies against a fine-mesh reference.

Every study solves the requested levels and the reference level, measures
errors of the coarse solutions against the reference (after exact transfer to
the reference mesh) and fits convergence rates.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from ..control.optimizer import OcpSolution, solve_ocp
from ..control.reduced import ControlProblem, ReducedProblem
from ..control.sosc import check_sosc, variational_inequality_check
from ..errors import DiracOcpError, StudyFailure
from ..fem.assembly import assemble_load, assemble_stiffness
from ..fem.linalg import solve_spd
from ..fem.mesh import TriMesh, build_mesh, refine_uniform
from ..fem.norms import Subdomain, norm_errors
from ..fem.space import FeFunction, prolongate
from .config import ConfigLoader, DefaultsYamlConfig
from .problem import MeshHierarchy
from .progress_tracker import ProgressTracker
from .rates import LOG_POWERS, RateFit, fit_or_none, nonincreasing_tail
from .state import ConvergenceReport, LevelRecord, RateModel, ReferenceCheck, StudyPlan, merge_reports


logger = logging.getLogger(__name__)

STUDY_QUANTITIES = {
    "state": ("state_l2", "state_l1"),
    "adjoint": ("adjoint_linf",),
    "gradient": ("gradient_gap",),
    "control": ("control_err",),
}

# Reference contamination must stay below this share of the coarsest error.
REFERENCE_SHARE = 0.25


@dataclass
class LevelSolution:
    """Everything the studies need from one level at a fixed control."""

    mesh: TriMesh
    state: FeFunction
    adjoint: Optional[FeFunction] = None
    psi: Optional[np.ndarray] = None
    newton_iterations: int = 0


def _rate_model(fit: Optional[RateFit]) -> Optional[RateModel]:
    return None if fit is None else RateModel(**fit.to_dict())


class StudyEngine:
    """
    Runs refinement studies for one plan.

    Meshes are shared between the studies of an engine so that every level is
    refined only once.
    """

    def __init__(self, plan: StudyPlan, config_loader: Optional[ConfigLoader] = None):
        """
        Initialize the study engine.

        Args:
            plan: Validated study plan
            config_loader: Configuration loader instance
        """
        self.plan = plan
        self.spec = plan.spec
        self.config_loader = config_loader or ConfigLoader()
        self.defaults: DefaultsYamlConfig = self.config_loader.load_defaults()
        self.meshes = MeshHierarchy(self.spec)
        self.problem: ControlProblem = self.spec.control_problem(
            self.meshes, tolerances=self.defaults.tolerances, **self.config_loader.solver_limits()
        )
        self.u_fixed = self.spec.fixed_control()
        self._fixed_cache: Dict[int, LevelSolution] = {}

        logger.info(
            f"StudyEngine initialized: levels {plan.levels}, reference {plan.reference_level}, "
            f"threads {plan.threads}"
        )

    # ------------------------------------------------------------------ helpers

    def _problem_summary(self) -> Dict[str, Any]:
        return {
            "dimension": self.spec.dimension,
            "sources": self.spec.sources.points,
            "alpha": self.spec.control.alpha,
            "nonlinearity": self.spec.nonlinearity.name,
            "fixed_control": [float(v) for v in self.u_fixed],
        }

    def _subdomain(self) -> Subdomain:
        return self.spec.subdomain(self.meshes.get(self.plan.reference_level))

    def _map_levels(self, levels: Sequence[int], work: Callable[[int], Any], tracker: ProgressTracker) -> Dict[int, Any]:
        """Run ``work`` on every level, on a thread pool if requested; results keyed by level."""

        def guarded(level: int):
            tracker.start_level(level)
            try:
                result = work(level)
            except DiracOcpError as e:
                raise StudyFailure(level, e) from e
            tracker.complete_level(level)
            return result

        # Build meshes coarse to fine first so worker threads only read them.
        for level in sorted(levels):
            self.meshes.get(level)

        if self.plan.threads == 1 or len(levels) == 1:
            return {level: guarded(level) for level in levels}
        with ThreadPoolExecutor(max_workers=self.plan.threads) as pool:
            futures = {level: pool.submit(guarded, level) for level in levels}
            return {level: futures[level].result() for level in sorted(futures)}

    def _solve_fixed(self, level: int, with_adjoint: bool) -> LevelSolution:
        cached = self._fixed_cache.get(level)
        if cached is not None and (cached.adjoint is not None or not with_adjoint):
            return cached
        mesh = self.meshes.get(level)
        reduced = ReducedProblem(mesh, self.problem)
        y, report = reduced.state(self.u_fixed)
        solution = LevelSolution(mesh=mesh, state=y, newton_iterations=report.iterations)
        if with_adjoint:
            solution.adjoint = reduced.adjoint(self.u_fixed)
            solution.psi = reduced.reduced_gradient(self.u_fixed)
        self._fixed_cache[level] = solution
        return solution

    def _finish(
        self,
        study: str,
        quantities: Sequence[str],
        records: List[LevelRecord],
        reference_errors: Dict[str, float],
    ) -> ConvergenceReport:
        reference_mesh = self.meshes.get(self.plan.reference_level)
        report = ConvergenceReport(
            study=study,
            levels=sorted(records, key=lambda r: r.level),
            reference_level=self.plan.reference_level,
            reference_h=reference_mesh.h,
            quantities=list(quantities),
            problem=self._problem_summary(),
        )
        for quantity in quantities:
            pairs = [(r.h, r.errors.get(quantity)) for r in report.levels]
            errors = [e for _, e in pairs]
            report.log_powers[quantity] = LOG_POWERS[quantity]
            report.rates[quantity] = _rate_model(fit_or_none(pairs))
            report.log_corrected_rates[quantity] = _rate_model(fit_or_none(pairs, LOG_POWERS[quantity]))
            report.monotone[quantity] = nonincreasing_tail(errors)
            if quantity in reference_errors:
                coarsest = errors[0] if errors and errors[0] is not None else None
                ratio = reference_errors[quantity] / coarsest if coarsest else None
                report.reference_check[quantity] = ReferenceCheck(
                    error=reference_errors[quantity],
                    coarsest=coarsest,
                    ratio=ratio,
                    ok=ratio is None or ratio <= REFERENCE_SHARE,
                )
                if ratio is not None and ratio > REFERENCE_SHARE:
                    logger.warning(
                        f"Reference error for {quantity} is {ratio:.2f} of the coarsest error; "
                        f"raise the reference level"
                    )
            rate = report.rates[quantity]
            if rate is not None:
                logger.info(f"{quantity}: fitted rate {rate.slope:.3f} (r2 = {rate.r2:.4f})")
        return report

    def _require_2d(self, study: str):
        if self.spec.dimension != 2:
            raise ValueError(f"The {study} study is only available in two dimensions")

    # ------------------------------------------------------------------ studies

    def run_state_study(self, quantities: Optional[Sequence[str]] = None) -> ConvergenceReport:
        """
        State errors in L2 and L1 against the reference state at the fixed control.
        """
        quantities = list(quantities or [q for q in STUDY_QUANTITIES["state"] if q in self.plan.quantities])
        if self.spec.dimension == 3:
            quantities = [q for q in quantities if q == "state_l2"]
        ref = self.plan.reference_level
        tracker = ProgressTracker("state", self.plan.levels + [ref - 1, ref])

        solutions = self._map_levels(
            sorted(set(self.plan.levels) | {ref - 1, ref}),
            lambda level: self._solve_fixed(level, with_adjoint=False),
            tracker,
        )
        reference = solutions[ref]

        def errors_of(solution: LevelSolution) -> Dict[str, Optional[float]]:
            norms = norm_errors(reference.mesh, reference.state, solution.state)
            return {"state_l2": norms["l2"], "state_l1": norms["l1"]}

        records = [
            LevelRecord(
                level=level,
                h=solutions[level].mesh.h,
                errors={q: v for q, v in errors_of(solutions[level]).items() if q in quantities},
                details={"newton_iterations": solutions[level].newton_iterations},
            )
            for level in self.plan.levels
        ]
        reference_errors = {q: v for q, v in errors_of(solutions[ref - 1]).items() if q in quantities}
        logger.info(tracker.generate_report())
        return self._finish("state", quantities, records, reference_errors)

    def run_adjoint_study(self) -> ConvergenceReport:
        """
        Adjoint errors in the maximum norm on the interior subdomain.
        """
        self._require_2d("adjoint")
        ref = self.plan.reference_level
        tracker = ProgressTracker("adjoint", self.plan.levels + [ref - 1, ref])
        solutions = self._map_levels(
            sorted(set(self.plan.levels) | {ref - 1, ref}),
            lambda level: self._solve_fixed(level, with_adjoint=True),
            tracker,
        )
        reference = solutions[ref]
        subdomain = self._subdomain()

        def linf(solution: LevelSolution) -> float:
            return norm_errors(reference.mesh, reference.adjoint, solution.adjoint, subdomain)["linf"]

        records = [
            LevelRecord(level=level, h=solutions[level].mesh.h, errors={"adjoint_linf": linf(solutions[level])})
            for level in self.plan.levels
        ]
        logger.info(tracker.generate_report())
        return self._finish("adjoint", ["adjoint_linf"], records, {"adjoint_linf": linf(solutions[ref - 1])})

    def run_gradient_gap_study(self) -> ConvergenceReport:
        """
        Max-norm gap between the discrete reduced gradients psi(h) and psi(reference).
        """
        self._require_2d("gradient gap")
        ref = self.plan.reference_level
        tracker = ProgressTracker("gradient", self.plan.levels + [ref - 1, ref])
        solutions = self._map_levels(
            sorted(set(self.plan.levels) | {ref - 1, ref}),
            lambda level: self._solve_fixed(level, with_adjoint=True),
            tracker,
        )
        psi_ref = solutions[ref].psi

        def gap(solution: LevelSolution) -> float:
            return float(np.max(np.abs(solution.psi - psi_ref)))

        records = [
            LevelRecord(
                level=level,
                h=solutions[level].mesh.h,
                errors={"gradient_gap": gap(solutions[level])},
                details={"psi": [float(v) for v in solutions[level].psi]},
            )
            for level in self.plan.levels
        ]
        logger.info(tracker.generate_report())
        return self._finish("gradient", ["gradient_gap"], records, {"gradient_gap": gap(solutions[ref - 1])})

    def run_control_study(self) -> ConvergenceReport:
        """
        Optimal control errors against the reference optimum.

        Levels are solved coarse to fine, each warm-started from the previous
        optimum; with ``study.localize_radius`` every level searches only near
        the previous optimum. The second-order check runs at the reference.
        """
        self._require_2d("control")
        ref = self.plan.reference_level
        chain = sorted(set(self.plan.levels) | {ref - 1, ref})
        tracker = ProgressTracker("control", chain)
        radius = self.spec.study.localize_radius
        optimizer = self.defaults.optimizer

        solutions: Dict[int, OcpSolution] = {}
        previous: Optional[OcpSolution] = None
        for level in chain:
            mesh = self.meshes.get(level)
            tracker.start_level(level)
            u0 = self.spec.initial_control() if previous is None else previous.control.amplitudes
            y0 = None if previous is None else prolongate(previous.state, mesh)
            localize = radius is not None and previous is not None
            try:
                solution = solve_ocp(
                    mesh,
                    self.problem,
                    u0=u0,
                    max_iter=optimizer.max_iter,
                    armijo=optimizer.armijo,
                    center=previous.control.amplitudes if localize else None,
                    radius=radius if localize else None,
                    y0=y0,
                )
            except DiracOcpError as e:
                raise StudyFailure(level, e) from e
            tracker.complete_level(level)
            solutions[level] = solution
            previous = solution

        u_ref = solutions[ref].control.amplitudes
        sosc_settings = self.defaults.sosc
        reference_reduced = ReducedProblem(self.meshes.get(ref), self.problem)
        sosc = check_sosc(
            self.meshes.get(ref),
            u_ref,
            self.problem,
            tau=sosc_settings.tau,
            kappa_min=sosc_settings.kappa_min,
            reduced=reference_reduced,
        )
        if not sosc.verdict:
            logger.warning(
                f"Second-order condition not confirmed at the reference (lambda_min = {sosc.lambda_min}); "
                f"control rates may be meaningless"
            )

        rng = np.random.default_rng(self.spec.seed)
        records = []
        for level in self.plan.levels:
            solution = solutions[level]
            vi = variational_inequality_check(
                solution.control.amplitudes,
                solution.diagnostics.psi,
                self.problem.bounds,
                self.problem.tol_kkt,
                rng=rng,
            )
            records.append(
                LevelRecord(
                    level=level,
                    h=solution.state.mesh.h,
                    errors={"control_err": float(np.max(np.abs(solution.control.amplitudes - u_ref)))},
                    objective=solution.objective,
                    details={
                        "control": solution.control.to_list(),
                        "projection_residual": solution.diagnostics.projection_residual,
                        "optimizer_iterations": solution.iterations,
                        "variational_inequality": vi,
                    },
                )
            )
        reference_gap = float(np.max(np.abs(solutions[ref - 1].control.amplitudes - u_ref)))
        logger.info(tracker.generate_report())
        report = self._finish("control", ["control_err"], records, {"control_err": reference_gap})
        report.reference_objective = solutions[ref].objective
        report.sosc = sosc.to_dict()
        report.sosc_verified = bool(sosc.verdict)
        return report

    def run(self) -> ConvergenceReport:
        """Run every study the plan's quantities need and merge the reports."""
        reports = []
        state_quantities = [q for q in STUDY_QUANTITIES["state"] if q in self.plan.quantities]
        if state_quantities:
            reports.append(self.run_state_study(state_quantities))
        if "adjoint_linf" in self.plan.quantities:
            reports.append(self.run_adjoint_study())
        if "gradient_gap" in self.plan.quantities:
            reports.append(self.run_gradient_gap_study())
        if "control_err" in self.plan.quantities:
            reports.append(self.run_control_study())
        return merge_reports(reports)


def run_state_study(plan: StudyPlan) -> ConvergenceReport:
    return StudyEngine(plan).run_state_study()


def run_adjoint_study(plan: StudyPlan) -> ConvergenceReport:
    return StudyEngine(plan).run_adjoint_study()


def run_gradient_gap_study(plan: StudyPlan, u_fixed: Optional[Sequence[float]] = None) -> ConvergenceReport:
    engine = StudyEngine(plan)
    if u_fixed is not None:
        engine.u_fixed = np.asarray(u_fixed, dtype=float)
    return engine.run_gradient_gap_study()


def run_control_study(plan: StudyPlan) -> ConvergenceReport:
    return StudyEngine(plan).run_control_study()


def run_studies(plan: StudyPlan) -> ConvergenceReport:
    return StudyEngine(plan).run()


def _smooth_solution(points: np.ndarray) -> np.ndarray:
    return np.sin(np.pi * points[..., 0]) * np.sin(np.pi * points[..., 1])


def _smooth_load(points: np.ndarray) -> np.ndarray:
    return 2.0 * np.pi ** 2 * _smooth_solution(points)


def run_smooth_poisson_study(levels: Sequence[int] = (2, 3, 4, 5, 6), tol_lin: float = 1e-12) -> ConvergenceReport:
    """
    Smooth-data check of the P1 discretization on the unit square.

    Solves -Laplace(y) = 2 pi^2 sin(pi x) sin(pi y) and compares with the exact
    solution sin(pi x) sin(pi y); the L2 error should decay like h^2.
    """
    square = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]
    levels = sorted(levels)
    mesh = build_mesh(levels[0], polygon=square)
    records = []
    for level in levels:
        while mesh.level < level:
            mesh = refine_uniform(mesh)
        coefficients = solve_spd(assemble_stiffness(mesh), assemble_load(mesh, _smooth_load), tol_lin=tol_lin)
        y = FeFunction.from_interior(mesh, coefficients)
        norms = norm_errors(mesh, y, _smooth_solution)
        records.append(LevelRecord(level=level, h=mesh.h, errors={"state_l2": norms["l2"]}))
        logger.info(f"smooth Poisson level {level}: L2 error {norms['l2']:.3e}")

    report = ConvergenceReport(
        study="smooth_poisson",
        levels=records,
        reference_level=levels[-1],
        reference_h=mesh.h,
        quantities=["state_l2"],
        problem={"dimension": 2, "load": "2 pi^2 sin(pi x) sin(pi y)", "exact": "sin(pi x) sin(pi y)"},
    )
    pairs = [(r.h, r.errors["state_l2"]) for r in records]
    report.rates["state_l2"] = _rate_model(fit_or_none(pairs))
    report.log_powers["state_l2"] = 0
    report.monotone["state_l2"] = nonincreasing_tail([e for _, e in pairs])
    return report
