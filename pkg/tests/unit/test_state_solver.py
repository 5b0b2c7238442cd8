"""
Unit tests for the discrete state, linearized and adjoint solves.
"""

import numpy as np
import pytest

from src.errors import MeshMismatch, MonotonicityViolation, NonlinearSolveFailure
from src.fem.assembly import assemble_mass, assemble_stiffness, dirac_load_vector, l2_inner
from src.fem.space import FeFunction
from src.solvers.nonlinearity import Nonlinearity, make_nonlinearity
from src.solvers.state import SemilinearSolver, newton_step_operator, solve_adjoint, solve_state


POINTS = [[0.3, 0.33], [0.71, 0.6]]


def _target(x):
    return np.sin(np.pi * x[..., 0]) * np.sin(np.pi * x[..., 1])


def _max_norm(fn: FeFunction) -> float:
    return float(np.max(np.abs(fn.values)))


def _observed_order(errors, epsilons):
    return np.log(errors[-2] / errors[-1]) / np.log(epsilons[-2] / epsilons[-1])


class TestSolveState:
    """Test the damped Newton solve."""

    def test_zero_control(self, square_mesh, cubic):
        y, report = solve_state(square_mesh(3), POINTS, [0.0, 0.0], cubic)

        assert np.all(y.values == 0.0)
        assert report.iterations == 1
        assert report.converged

    def test_poisson_when_nonlinearity_vanishes(self, square_mesh, zero_nl):
        mesh = square_mesh(3)
        u = [2.0, -1.0]
        y, _ = solve_state(mesh, POINTS, u, zero_nl)
        K = assemble_stiffness(mesh).toarray()
        expected = np.linalg.solve(K, dirac_load_vector(mesh, POINTS, u))

        np.testing.assert_allclose(y.interior_values, expected, atol=1e-9)

    def test_residual_below_tolerance(self, square_mesh, cubic):
        mesh = square_mesh(3)
        solver = SemilinearSolver(mesh, cubic, POINTS)
        y, report = solver.solve_state([8.0, -6.0])
        r = solver.residual(y, dirac_load_vector(mesh, POINTS, [8.0, -6.0]))

        assert report.converged
        assert np.max(np.abs(r)) <= 1e-10
        assert report.history == sorted(report.history, reverse=True)

    def test_independent_of_initial_guess(self, square_mesh, cubic, rng):
        """The monotone problem has a unique discrete solution."""
        mesh = square_mesh(3)
        solver = SemilinearSolver(mesh, cubic, POINTS)
        y_zero, _ = solver.solve_state([5.0, 3.0])
        start = FeFunction.from_interior(mesh, rng.normal(scale=2.0, size=mesh.interior.size))
        y_random, _ = solver.solve_state([5.0, 3.0], y0=start)

        np.testing.assert_allclose(y_random.values, y_zero.values, atol=1e-9)

    def test_quadratic_convergence_tail(self, square_mesh, cubic):
        """Close to the solution each residual is bounded by the square of the previous one."""
        solver = SemilinearSolver(square_mesh(3), cubic, POINTS, tol_newton=1e-12)
        _, report = solver.solve_state([50.0, 50.0])
        history = report.history
        tail = [(r, r_next) for r, r_next in zip(history, history[1:]) if r < 1e-2]

        assert report.converged
        assert tail
        for r, r_next in tail:
            assert r_next <= 1e3 * r ** 2 + 1e-10 * r + 1e-14

    def test_polish_lowers_residual(self, square_mesh, cubic):
        mesh = square_mesh(3)
        u = [8.0, -6.0]
        _, plain = SemilinearSolver(mesh, cubic, POINTS).solve_state(u)
        y, polished = SemilinearSolver(mesh, cubic, POINTS, polish=True).solve_state(u)
        r = SemilinearSolver(mesh, cubic, POINTS).residual(y, dirac_load_vector(mesh, POINTS, u))

        assert polished.iterations == plain.iterations
        assert polished.residual <= plain.residual
        assert float(np.max(np.abs(r))) == pytest.approx(polished.residual)

    def test_iteration_cap(self, square_mesh, cubic):
        solver = SemilinearSolver(square_mesh(3), cubic, POINTS, max_newton_iter=1)

        with pytest.raises(NonlinearSolveFailure) as exc:
            solver.solve_state([50.0, 50.0])
        assert exc.value.report.iterations == 1
        assert not exc.value.report.converged

    def test_non_finite_control(self, square_mesh, cubic):
        with pytest.raises(ValueError):
            solve_state(square_mesh(2), POINTS, [np.nan, 0.0], cubic)

    def test_foreign_initial_guess(self, square_mesh, cubic):
        with pytest.raises(MeshMismatch):
            solve_state(square_mesh(3), POINTS, [1.0, 1.0], cubic, y0=FeFunction.zeros(square_mesh(2)))

    def test_missing_points(self, square_mesh, cubic):
        with pytest.raises(ValueError, match="source points"):
            SemilinearSolver(square_mesh(2), cubic).solve_state([1.0])


class TestNewtonOperator:
    def test_linear_nonlinearity(self, square_mesh, rng):
        mesh = square_mesh(3)
        y = FeFunction.from_interior(mesh, rng.normal(size=mesh.interior.size))
        op = newton_step_operator(mesh, y, make_nonlinearity("linear"))
        expected = assemble_stiffness(mesh) + assemble_mass(mesh)

        np.testing.assert_allclose(op.toarray(), expected.toarray(), atol=1e-14)

    def test_negative_slope_rejected(self, square_mesh, rng):
        mesh = square_mesh(2)
        nl = Nonlinearity(
            name="decreasing",
            a=lambda x, y: -y,
            a_y=lambda x, y: -np.ones_like(y),
            a_yy=lambda x, y: np.zeros_like(y),
            growth={"a": 1.0, "a_y": 0.0, "a_yy": 0.0},
        )

        with pytest.raises(MonotonicityViolation):
            newton_step_operator(mesh, FeFunction.zeros(mesh), nl)


class TestLinearizedSolves:
    """Finite-difference checks of the first and second derivatives of u -> y_h(u)."""

    def test_first_derivative(self, square_mesh, cubic):
        solver = SemilinearSolver(square_mesh(3), cubic, POINTS)
        u, v = np.array([6.0, -4.0]), np.array([1.0, 2.0])
        y, _ = solver.solve_state(u)
        phi = solver.solve_linearized_state(y, v)

        epsilons = [0.1, 0.05, 0.025]
        errors = [_max_norm(solver.solve_state(u + eps * v)[0] - y - phi * eps) for eps in epsilons]

        assert 1.7 <= _observed_order(errors, epsilons) <= 2.3

    def test_second_derivative(self, square_mesh, cubic):
        solver = SemilinearSolver(square_mesh(3), cubic, POINTS)
        u, v = np.array([6.0, -4.0]), np.array([1.0, 2.0])
        y, _ = solver.solve_state(u)
        phi = solver.solve_linearized_state(y, v)
        phi_vv = solver.solve_second_linearized(y, phi, phi)

        epsilons = [0.1, 0.05, 0.025]
        errors = [
            _max_norm(solver.solve_state(u + eps * v)[0] - y - phi * eps - phi_vv * (0.5 * eps ** 2))
            for eps in epsilons
        ]

        assert 2.6 <= _observed_order(errors, epsilons) <= 3.4

    def test_many_directions(self, square_mesh, cubic):
        solver = SemilinearSolver(square_mesh(3), cubic, POINTS)
        y, _ = solver.solve_state([3.0, 1.0])
        phis = solver.solve_linearized_many(y, np.eye(2))

        for k, phi in enumerate(phis):
            single = solver.solve_linearized_state(y, np.eye(2)[k])
            np.testing.assert_allclose(phi.values, single.values)

    def test_second_linearized_vanishes_for_linear_problem(self, square_mesh):
        mesh = square_mesh(3)
        solver = SemilinearSolver(mesh, make_nonlinearity("linear"), POINTS)
        y, _ = solver.solve_state([3.0, 1.0])
        phi = solver.solve_linearized_state(y, [1.0, 0.0])

        assert _max_norm(solver.solve_second_linearized(y, phi, phi)) == 0.0


class TestAdjoint:
    """Test the adjoint state."""

    def test_duality_with_linearized_state(self, square_mesh, cubic, rng):
        """sum_z p(z) v_z equals (y - y_d, phi_v) for every direction v."""
        mesh = square_mesh(3)
        solver = SemilinearSolver(mesh, cubic, POINTS)
        y, _ = solver.solve_state([6.0, -4.0])
        p = solver.solve_adjoint(y, _target)

        for _ in range(3):
            v = rng.normal(size=2)
            phi = solver.solve_linearized_state(y, v)
            lhs = float(solver.sources.values(p) @ v)
            rhs = l2_inner(mesh, y, phi) - l2_inner(mesh, _target, phi)
            assert lhs == pytest.approx(rhs, rel=1e-8, abs=1e-14)

    def test_zero_when_state_matches_target(self, square_mesh, cubic):
        mesh = square_mesh(3)
        y, _ = solve_state(mesh, POINTS, [6.0, -4.0], cubic)
        p = solve_adjoint(mesh, y, cubic, y)

        assert np.all(p.values == 0.0)

    def test_adjoint_of_poisson(self, square_mesh, zero_nl):
        """With a = 0 the adjoint is the Poisson solve with load (y - y_d)."""
        mesh = square_mesh(3)
        y, _ = solve_state(mesh, POINTS, [1.0, 1.0], zero_nl)
        p = solve_adjoint(mesh, y, zero_nl, 0.0)
        expected = np.linalg.solve(
            assemble_stiffness(mesh).toarray(), assemble_mass(mesh) @ y.interior_values
        )

        np.testing.assert_allclose(p.interior_values, expected, rtol=1e-8, atol=1e-14)

    def test_nonnegative_when_state_above_target(self, square_mesh, zero_nl):
        """Nonnegative sources and a target below the state give a nonnegative adjoint."""
        mesh = square_mesh(3)
        solver = SemilinearSolver(mesh, zero_nl, POINTS)
        y, _ = solver.solve_state([3.0, 2.0])
        p = solver.solve_adjoint(y, -1.0)

        assert np.all(y.values >= -1e-12)
        assert np.min(p.values) >= -1e-12
        assert np.max(p.values) > 0.0

    def test_nonpositive_when_state_below_target(self, square_mesh, zero_nl):
        mesh = square_mesh(3)
        solver = SemilinearSolver(mesh, zero_nl, POINTS)
        y, _ = solver.solve_state([-3.0, -2.0])
        p = solver.solve_adjoint(y, 1.0)

        assert np.max(p.values) <= 1e-12
        assert np.min(p.values) < 0.0
