"""
Subcommand handlers.

Each handler returns a process exit code; ``run_command`` maps exceptions to
codes: 2 for bad input, 1 for numerical failures, 130 on interrupt.
"""

import argparse
import logging
from pathlib import Path
from typing import Callable, Dict, Optional

import numpy as np

from ..control.optimizer import solve_ocp
from ..control.reduced import ReducedProblem
from ..control.sosc import check_sign_condition_bound, check_sosc, variational_inequality_check
from ..errors import OptimizerStalled, StudyFailure, ValidationError
from ..fem.mesh import TriMesh, mesh_statistics, mesh_to_json
from ..orchestration.config import ConfigLoader
from ..orchestration.engine import StudyEngine, run_smooth_poisson_study
from ..orchestration.problem import MeshHierarchy, ProblemSpec, parse_spec
from ..orchestration.state import StudyPlan
from ..renderers.markdown import TEMPLATE_NAME, MarkdownRenderer
from ..renderers.reports import write_json, write_jsonl, write_report
from ..solvers.nonlinearity import check_consistency
from .progress import ProgressUI


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_SOLVER_FAILURE = 1
EXIT_INVALID_INPUT = 2
EXIT_INTERRUPTED = 130


def _load_spec(path: Path) -> ProblemSpec:
    spec = parse_spec(path)
    # Derivatives of the nonlinearity are checked against finite differences once per run.
    check_consistency(spec.make_nonlinearity(), rng=np.random.default_rng(spec.seed), dim=spec.dimension)
    logger.info(
        f"Loaded {path}: {spec.count} source point(s), alpha = {spec.control.alpha}, "
        f"nonlinearity '{spec.nonlinearity.name}'"
    )
    return spec


def _level(args: argparse.Namespace, spec: ProblemSpec) -> int:
    return args.level if args.level is not None else max(spec.study.levels)


def _output_dir(args: argparse.Namespace, config_loader: ConfigLoader) -> Path:
    out = args.out or config_loader.get_output_dir()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _log_mesh(mesh: TriMesh):
    logger.info(f"Level {mesh.level}: {mesh.n_cells} cells, {mesh.n_vertices} vertices, h = {mesh.h:.4g}")


def cmd_solve(args: argparse.Namespace, ui: ProgressUI, config_loader: ConfigLoader) -> int:
    """Solve the state equation for one control and write the discrete state."""
    spec = _load_spec(args.spec)
    level = _level(args, spec)
    meshes = MeshHierarchy(spec)
    mesh = meshes.get(level)
    _log_mesh(mesh)

    u = np.asarray(args.control, dtype=float) if args.control is not None else spec.fixed_control()
    if u.size != spec.count:
        raise ValueError(f"--control has {u.size} amplitude(s), the problem has {spec.count} source point(s)")

    problem = spec.control_problem(
        meshes, tolerances=config_loader.load_defaults().tolerances, **config_loader.solver_limits()
    )
    reduced = ReducedProblem(mesh, problem)
    y, report = reduced.state(u)

    out = _output_dir(args, config_loader)
    payload = {
        "level": level,
        "control": u.tolist(),
        "objective": reduced.cost(u),
        "newton": report.to_dict(),
        "mesh": mesh_statistics(mesh),
        "state": y.to_json(),
    }
    outputs = {"state": write_json(payload, out / f"state_level{level}.json")}
    if args.mesh:
        outputs["mesh"] = write_json(mesh_to_json(mesh), out / f"mesh_level{level}.json")

    ui.show_state_summary(level, mesh.h, payload["newton"], float(np.max(np.abs(y.values))))
    ui.show_outputs(outputs)
    return EXIT_OK


def cmd_optimize(args: argparse.Namespace, ui: ProgressUI, config_loader: ConfigLoader) -> int:
    """Solve the discrete control problem at one level and write control, diagnostics and trace."""
    spec = _load_spec(args.spec)
    level = _level(args, spec)
    meshes = MeshHierarchy(spec)
    mesh = meshes.get(level)
    _log_mesh(mesh)
    defaults = config_loader.load_defaults()
    problem = spec.control_problem(meshes, tolerances=defaults.tolerances, **config_loader.solver_limits())
    out = _output_dir(args, config_loader)
    trace_path = out / f"trace_level{level}.jsonl"

    try:
        solution = solve_ocp(
            mesh,
            problem,
            u0=spec.initial_control(),
            max_iter=args.max_iter or defaults.optimizer.max_iter,
            armijo=defaults.optimizer.armijo,
        )
    except OptimizerStalled as e:
        write_jsonl(e.trace, trace_path)
        write_json(
            {
                "level": level,
                "mesh": mesh_statistics(mesh),
                "status": "stalled",
                "control": e.control,
                "iterations": len(e.trace) - 1,
                "diagnostics": e.diagnostics.to_dict() if e.diagnostics is not None else None,
            },
            out / f"control_level{level}.json",
        )
        raise

    rng = np.random.default_rng(spec.seed)
    u_bar = solution.control.amplitudes
    payload = {"level": level, "mesh": mesh_statistics(mesh), "status": "converged", **solution.to_dict()}
    payload["variational_inequality"] = variational_inequality_check(
        u_bar, solution.diagnostics.psi, problem.bounds, problem.tol_kkt, rng=rng
    )

    sosc_dict: Optional[Dict] = None
    if not args.no_sosc:
        sosc = check_sosc(
            mesh,
            u_bar,
            problem,
            tau=defaults.sosc.tau,
            kappa_min=defaults.sosc.kappa_min,
            reduced=ReducedProblem(mesh, problem),
        )
        sosc_dict = sosc.to_dict()
        payload["sosc"] = sosc_dict
        payload["sign_condition"] = check_sign_condition_bound(
            np.asarray(sosc.details["hessian"]),
            solution.diagnostics.psi,
            u_bar,
            problem.bounds,
            sosc.tau,
            sosc.lambda_min,
            rng=rng,
            samples=defaults.sosc.sign_samples,
        )

    outputs = {
        "control": write_json(payload, out / f"control_level{level}.json"),
        "trace": write_jsonl(solution.trace, trace_path),
    }
    ui.show_ocp_summary(level, payload, sosc_dict)
    ui.show_outputs(outputs)
    return EXIT_OK


def cmd_study(args: argparse.Namespace, ui: ProgressUI, config_loader: ConfigLoader) -> int:
    """Run the requested refinement studies and write CSV and JSON (and optionally Markdown)."""
    spec = _load_spec(args.spec)
    plan = StudyPlan.from_spec(
        spec,
        levels=args.levels,
        reference_level=args.reference,
        quantities=args.quantities,
        threads=args.threads or config_loader.load_defaults().study.threads,
    )
    ui.show_config_summary({
        "Levels": ", ".join(str(level) for level in plan.levels),
        "Reference": plan.reference_level,
        "Quantities": ", ".join(plan.quantities),
        "Threads": plan.threads,
    })

    report = StudyEngine(plan, config_loader=config_loader).run()

    out = _output_dir(args, config_loader)
    outputs = write_report(report, out)
    if args.markdown:
        renderer = MarkdownRenderer(config_loader.get_template_path(TEMPLATE_NAME).parent)
        outputs["markdown"] = out / "study.md"
        renderer.render(report, outputs["markdown"])

    if report.reference_check and not all(check.ok for check in report.reference_check.values()):
        ui.show_warning("Reference solution is not clearly finer than the coarsest level; rates may be unreliable")
    ui.show_study_report(report)
    ui.show_outputs(outputs)
    return EXIT_OK


def cmd_anchor(args: argparse.Namespace, ui: ProgressUI, config_loader: ConfigLoader) -> int:
    """Smooth Poisson check of the discretization against its closed-form solution."""
    defaults = config_loader.load_defaults()
    levels = args.levels or defaults.study.anchor_levels
    report = run_smooth_poisson_study(levels, tol_lin=defaults.tolerances.tol_lin)
    outputs = write_report(report, _output_dir(args, config_loader), stem="anchor")
    ui.show_study_report(report)
    ui.show_outputs(outputs)
    return EXIT_OK


COMMANDS: Dict[str, Callable[[argparse.Namespace, ProgressUI, ConfigLoader], int]] = {
    "solve": cmd_solve,
    "optimize": cmd_optimize,
    "study": cmd_study,
    "anchor": cmd_anchor,
}


def run_command(args: argparse.Namespace, ui: ProgressUI, config_loader: ConfigLoader) -> int:
    """
    Dispatch to the subcommand handler and map failures to exit codes.

    Returns:
        0 on success, 1 on solver failure, 2 on invalid input, 130 on interrupt
    """
    try:
        return COMMANDS[args.command](args, ui, config_loader)
    except KeyboardInterrupt:
        ui.show_warning("Interrupted by user")
        return EXIT_INTERRUPTED
    except ValidationError as e:
        ui.show_error(f"{len(e.violations)} problem(s) in the input:")
        for violation in e.violations:
            ui.show_error(f"  {violation}")
        return EXIT_INVALID_INPUT
    except FileNotFoundError as e:
        ui.show_error(str(e))
        return EXIT_INVALID_INPUT
    except StudyFailure as e:
        logger.debug("Study failure", exc_info=True)
        ui.show_error(str(e))
        return EXIT_SOLVER_FAILURE
    except ValueError as e:
        ui.show_error(str(e))
        return EXIT_INVALID_INPUT
    except RuntimeError as e:
        logger.debug("Solver failure", exc_info=True)
        ui.show_error(str(e))
        return EXIT_SOLVER_FAILURE
