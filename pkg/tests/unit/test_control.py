"""
Unit tests for the reduced problem, projected gradient and optimality checks.
"""

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from src.control.optimizer import solve_ocp, trace_to_jsonl
from src.control.reduced import ReducedProblem, make_control_problem
from src.control.sosc import (
    check_sign_condition_bound,
    check_sosc,
    critical_indices,
    sosc_report,
    variational_inequality_check,
)
from src.control.types import ACTIVE_LOWER, ACTIVE_UPPER, FREE, ControlBounds, ControlVector, classify_active_set, project
from src.errors import OptimizerStalled


POINTS = [[0.3, 0.33], [0.71, 0.6]]


def _target(x):
    return 10.0 * np.sin(np.pi * x[..., 0]) * np.sin(np.pi * x[..., 1])


@pytest.fixture
def problem(cubic):
    return make_control_problem(POINTS, -20.0, 20.0, 0.05, _target, cubic, tol_newton=1e-12)


class TestControlTypes:
    """Test bounds, projection and active-set tagging."""

    def test_project(self):
        bounds = ControlBounds.uniform(-1.0, 1.0, 3)

        np.testing.assert_array_equal(project([2.0, -3.0, 0.5], bounds), [1.0, -1.0, 0.5])
        assert bounds.contains([1.0, -1.0, 0.0])
        assert not bounds.contains([1.5, 0.0, 0.0])

    def test_strict_bounds_required(self):
        with pytest.raises(ValueError, match="point\\(s\\) 1"):
            ControlBounds(np.array([0.0, 1.0]), np.array([1.0, 1.0]))

    def test_localized(self):
        bounds = ControlBounds.uniform(-1.0, 1.0, 2).localized([0.8, 0.0], 0.5)

        np.testing.assert_allclose(bounds.lower, [0.3, -0.5])
        np.testing.assert_allclose(bounds.upper, [1.0, 0.5])

    def test_localized_outside_box(self):
        with pytest.raises(ValueError):
            ControlBounds.uniform(-1.0, 1.0, 1).localized([3.0], 0.5)

    def test_classify(self):
        bounds = ControlBounds.uniform(-1.0, 1.0, 3)
        tags = classify_active_set(np.array([-1.0, 0.2, 1.0]), np.array([0.5, 0.0, -0.5]), bounds)

        assert tags == [ACTIVE_LOWER, FREE, ACTIVE_UPPER]

    def test_control_vector(self):
        u = ControlVector([1.0, 2.0])

        assert len(u) == 2
        assert u.to_list() == [1.0, 2.0]
        with pytest.raises(ValueError):
            ControlVector([np.inf])
        with pytest.raises(ValueError):
            ControlVector.of_length([1.0], 2)

    def test_alpha_positive(self, cubic):
        with pytest.raises(ValueError, match="alpha"):
            make_control_problem(POINTS, -1.0, 1.0, 0.0, 0.0, cubic)

    def test_bounds_match_points(self, cubic):
        with pytest.raises(ValueError):
            make_control_problem(POINTS, [-1.0, -1.0, -1.0], 1.0, 0.1, 0.0, cubic)


class TestReducedProblem:
    """Test cost, gradient and Hessian against finite differences."""

    def test_gradient_matches_finite_differences(self, square_mesh, problem):
        reduced = ReducedProblem(square_mesh(3), problem)
        u = np.array([4.0, -2.0])
        gradient = reduced.reduced_gradient(u)

        eps = 1e-4
        fd = np.array([
            (reduced.cost(u + eps * e) - reduced.cost(u - eps * e)) / (2.0 * eps) for e in np.eye(2)
        ])
        np.testing.assert_allclose(gradient, fd, rtol=1e-5, atol=1e-7)

    def test_hessian_matches_finite_differences(self, square_mesh, problem):
        reduced = ReducedProblem(square_mesh(3), problem)
        u = np.array([4.0, -2.0])
        hessian = reduced.reduced_hessian(u)

        eps = 1e-4
        fd = np.column_stack([
            (reduced.reduced_gradient(u + eps * e) - reduced.reduced_gradient(u - eps * e)) / (2.0 * eps)
            for e in np.eye(2)
        ])
        np.testing.assert_allclose(hessian, fd, rtol=1e-5, atol=1e-7)

    def test_hessian_symmetric(self, square_mesh, problem):
        hessian = ReducedProblem(square_mesh(3), problem).reduced_hessian([4.0, -2.0])

        np.testing.assert_array_equal(hessian, hessian.T)

    def test_hessian_bounded_below_for_linear_state(self, square_mesh, zero_nl):
        """Without curvature of a the Hessian is a Gram matrix plus alpha I."""
        problem = make_control_problem(POINTS, -5.0, 5.0, 0.3, _target, zero_nl)
        hessian = ReducedProblem(square_mesh(3), problem).reduced_hessian([1.0, 1.0])

        assert np.linalg.eigvalsh(hessian)[0] >= 0.3 - 1e-12

    def test_cost_at_zero(self, square_mesh, problem):
        """With u = 0 the state vanishes and j is half the squared norm of y_d."""
        reduced = ReducedProblem(square_mesh(4), problem)

        assert reduced.cost([0.0, 0.0]) == pytest.approx(0.5 * 100.0 * 0.25, rel=1e-2)

    def test_state_cache(self, square_mesh, problem):
        reduced = ReducedProblem(square_mesh(3), problem)
        reduced.cost([1.0, 1.0])
        reduced.reduced_gradient([1.0, 1.0])

        assert reduced.state_solves == 1

    def test_wrong_length(self, square_mesh, problem):
        with pytest.raises(ValueError):
            ReducedProblem(square_mesh(2), problem).cost([1.0])


class TestSolveOcp:
    """Test the projected gradient solver."""

    def test_converges_to_stationary_point(self, square_mesh, problem):
        mesh = square_mesh(3)
        solution = solve_ocp(mesh, problem)
        u_bar, y_bar, p_bar, diagnostics = solution

        assert diagnostics.projection_residual <= problem.tol_kkt
        assert problem.bounds.contains(u_bar)
        assert y_bar.mesh is mesh and p_bar.mesh is mesh
        assert solution.trace[-1]["proj_residual"] <= problem.tol_kkt
        assert solution.objective <= ReducedProblem(mesh, problem).cost([0.0, 0.0])

    def test_stationarity_condition(self, square_mesh, problem):
        """u_z equals the clamp of -p(z)/alpha."""
        solution = solve_ocp(square_mesh(3), problem)
        p_z = ReducedProblem(square_mesh(3), problem).adjoint_point_values(solution.control)

        np.testing.assert_allclose(
            solution.control.amplitudes, project(-p_z / problem.alpha, problem.bounds), atol=1e-7
        )

    def test_active_upper_bound(self, square_mesh, cubic):
        problem = make_control_problem(POINTS, -20.0, 0.5, 0.05, _target, cubic)
        solution = solve_ocp(square_mesh(3), problem)

        assert solution.diagnostics.active_set == [ACTIVE_UPPER, ACTIVE_UPPER]
        assert np.all(solution.diagnostics.psi <= 0.0)
        np.testing.assert_allclose(solution.control.amplitudes, [0.5, 0.5])

    def test_matches_scalar_minimization(self, square_mesh, cubic):
        """With one source the result agrees with a bounded scalar minimization of j_h."""
        mesh = square_mesh(3)
        problem = make_control_problem([[0.5, 0.5]], -10.0, 10.0, 0.1, _target, cubic, tol_newton=1e-12)
        reduced = ReducedProblem(mesh, problem)
        reference = minimize_scalar(
            lambda t: reduced.cost([t]), bounds=(-10.0, 10.0), method="bounded", options={"xatol": 1e-9}
        )
        solution = solve_ocp(mesh, problem)

        assert solution.control.amplitudes[0] == pytest.approx(reference.x, abs=1e-5)

    def test_iteration_cap(self, square_mesh, problem):
        with pytest.raises(OptimizerStalled) as exc:
            solve_ocp(square_mesh(3), problem, max_iter=0)

        assert len(exc.value.trace) == 1
        assert exc.value.diagnostics.projection_residual > problem.tol_kkt
        assert exc.value.control == [0.0, 0.0]

    def test_initial_control_projected(self, square_mesh, problem):
        records = []
        solve_ocp(square_mesh(2), problem, u0=[100.0, -100.0], on_iteration=records.append)

        assert records[0]["iter"] == 0
        assert [r["iter"] for r in records] == list(range(len(records)))

    def test_trace_is_json_lines(self, square_mesh, problem):
        solution = solve_ocp(square_mesh(2), problem)
        lines = trace_to_jsonl(solution.trace).splitlines()

        assert len(lines) == len(solution.trace)
        assert lines[0].startswith('{"iter": 0')

    def test_localization_needs_both(self, square_mesh, problem):
        with pytest.raises(ValueError, match="center and radius"):
            solve_ocp(square_mesh(2), problem, center=[0.0, 0.0])

    def test_localized_search_stays_in_ball(self, square_mesh, problem):
        solution = solve_ocp(square_mesh(2), problem, center=[0.0, 0.0], radius=0.1)

        assert np.all(np.abs(solution.control.amplitudes) <= 0.1 + 1e-12)

    @pytest.mark.parametrize("level", [2, 3])
    def test_converges_at_default_tolerances(self, square_mesh, cubic, level):
        """Newton at its default tolerance leaves enough accuracy in j for the line search."""
        problem = make_control_problem([[0.5, 0.5], [0.375, 0.625]], -10.0, 10.0, 0.1, _target, cubic)
        solution = solve_ocp(square_mesh(level), problem)

        assert problem.tol_newton == 1e-10
        assert solution.diagnostics.projection_residual <= problem.tol_kkt

    def test_objective_nonincreasing(self, square_mesh, problem):
        solution = solve_ocp(square_mesh(3), problem, u0=[15.0, -15.0])
        values = [record["j"] for record in solution.trace]

        assert len(values) > 2
        for j, j_next in zip(values, values[1:]):
            assert j_next <= j + 1e-9 * max(1.0, abs(j))

    def test_small_alpha_recovers_reachable_control(self, square_mesh, cubic):
        """With y_d = S_h(u*) the optimal controls approach u* as alpha goes to zero."""
        mesh = square_mesh(3)
        u_star = np.array([2.0, -1.0])
        seed = make_control_problem(POINTS, -10.0, 10.0, 1.0, 0.0, cubic, tol_newton=1e-12)
        y_star, _ = ReducedProblem(mesh, seed).state(u_star)

        errors = []
        for alpha in (1e-2, 1e-4, 1e-6):
            problem = make_control_problem(POINTS, -10.0, 10.0, alpha, y_star, cubic, tol_newton=1e-12)
            solution = solve_ocp(mesh, problem, tol_kkt=1e-7, max_iter=2000)
            errors.append(float(np.max(np.abs(solution.control.amplitudes - u_star))))

        assert errors[0] > errors[1] > errors[2]
        assert errors[-1] < 1e-2


class TestSecondOrderChecks:
    """Test the critical-set eigenvalue test and the sampled checks."""

    def test_critical_set_includes_ties(self):
        np.testing.assert_array_equal(critical_indices(np.array([1e-9, 1e-8, 1e-7]), 1e-8), [0, 1])

    def test_two_by_two(self):
        report = sosc_report(np.array([[2.0, 1.0], [1.0, 2.0]]), np.zeros(2), tau=1e-8, kappa_min=0.5)

        assert report.critical_set == [0, 1]
        assert report.lambda_min == pytest.approx(1.0)
        assert report.verdict

    def test_restricted_to_critical_coordinates(self):
        hessian = np.array([[-1.0, 0.0], [0.0, 2.0]])
        report = sosc_report(hessian, np.array([1.0, 0.0]), tau=1e-8, kappa_min=0.5)

        assert report.critical_set == [1]
        assert report.lambda_min == pytest.approx(2.0)
        assert report.verdict

    def test_negative_curvature(self):
        report = sosc_report(np.array([[0.1, 0.0], [0.0, 2.0]]), np.zeros(2), tau=1e-8, kappa_min=0.5)

        assert not report.verdict

    def test_empty_critical_set(self):
        report = sosc_report(np.eye(2), np.array([1.0, -1.0]), tau=1e-8, kappa_min=0.5)

        assert report.critical_set == []
        assert report.lambda_min is None
        assert report.verdict

    def test_check_at_computed_control(self, square_mesh, problem):
        mesh = square_mesh(3)
        solution = solve_ocp(mesh, problem)
        report = check_sosc(mesh, solution.control.amplitudes, problem)

        assert report.tau == pytest.approx(10.0 * problem.tol_kkt)
        assert report.kappa_min == pytest.approx(0.5 * problem.alpha)
        assert len(report.details["hessian"]) == 2
        assert report.to_dict()["verdict"] == report.verdict

    def test_sign_condition_bound(self, rng):
        bounds = ControlBounds.uniform(0.0, 1.0, 2)
        result = check_sign_condition_bound(
            np.diag([1.0, 3.0]), np.zeros(2), np.array([0.0, 0.5]), bounds, tau=1e-8, lambda_min=1.0, rng=rng
        )

        assert result["holds"]
        assert result["min_ratio"] >= 1.0 - 1e-12

    def test_sign_condition_empty(self):
        result = check_sign_condition_bound(
            np.eye(1), np.ones(1), np.zeros(1), ControlBounds.uniform(-1.0, 1.0, 1), 1e-8, None
        )

        assert result == {"samples": 0, "min_ratio": None, "holds": True}

    def test_variational_inequality(self, rng):
        bounds = ControlBounds.uniform(-1.0, 1.0, 2)
        # Stationary: gradient vanishes on the free coordinate and pushes into the active bound.
        good = variational_inequality_check(np.array([-1.0, 0.0]), np.array([0.3, 0.0]), bounds, 1e-8, rng=rng)
        bad = variational_inequality_check(np.array([0.0, 0.0]), np.array([1.0, 0.0]), bounds, 1e-8, rng=rng)

        assert good["holds"] and good["worst"] >= 0.0
        assert not bad["holds"]
