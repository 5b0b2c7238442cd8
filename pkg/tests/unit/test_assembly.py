"""
Unit tests for P1 assembly, the CG solver, norms and prolongation.
"""

from dataclasses import replace

import numpy as np
import pytest
import scipy.sparse as sp

from src.errors import LinearSolveFailure, MeshMismatch, MonotonicityViolation
from src.fem.assembly import (
    assemble_mass,
    assemble_semilinear_residual,
    assemble_stiffness,
    assemble_weighted_mass,
    dirac_load_vector,
    integrate,
    l2_inner,
    locate_sources,
)
from src.fem.linalg import solve_spd
from src.fem.mesh import build_mesh, triangulate_polygon
from src.fem.norms import Subdomain, norm_errors
from src.fem.space import FeFunction, evaluate, prolongate
from src.solvers.nonlinearity import make_nonlinearity


UNIT_SQUARE = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]


def _unconstrained(mesh):
    return replace(mesh, boundary=np.zeros(mesh.n_vertices, dtype=bool))


class TestStiffness:
    """Test the Dirichlet Laplacian."""

    def test_five_point_stencil(self, square_mesh):
        """On the uniform right-triangle mesh K reproduces the 5-point finite difference stencil."""
        mesh = square_mesh(2)
        K = assemble_stiffness(mesh).toarray()
        coords = mesh.vertices[mesh.interior]
        spacing = 0.25

        assert K.shape == (9, 9)
        for i in range(9):
            for j in range(9):
                offset = np.abs(coords[i] - coords[j])
                if i == j:
                    expected = 4.0
                elif np.isclose(offset.sum(), spacing) and np.isclose(offset.max(), spacing):
                    expected = -1.0
                else:
                    expected = 0.0
                assert K[i, j] == pytest.approx(expected, abs=1e-12)

    def test_symmetric(self, square_mesh):
        K = assemble_stiffness(square_mesh(3))

        assert abs(K - K.T).max() < 1e-14

    def test_single_triangle_has_no_dofs(self):
        mesh = triangulate_polygon([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        K = assemble_stiffness(mesh)

        assert K.shape == (0, 0)

    def test_constants_in_kernel_without_boundary(self, unconstrained_square):
        """Row sums vanish when no vertex is constrained."""
        K = assemble_stiffness(unconstrained_square)

        np.testing.assert_allclose(K @ np.ones(4), 0.0, atol=1e-14)


class TestMass:
    """Test the weighted mass matrix."""

    def test_reference_element(self):
        mesh = _unconstrained(triangulate_polygon([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))
        M = assemble_mass(mesh).toarray()
        expected = 0.5 / 12.0 * np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]])

        np.testing.assert_allclose(M, expected, atol=1e-15)

    def test_total_mass(self, unconstrained_square):
        M = assemble_mass(unconstrained_square)

        assert M.sum() == pytest.approx(1.0, abs=1e-14)

    def test_zero_weight(self, square_mesh):
        M = assemble_weighted_mass(square_mesh(2), 0.0)

        assert M.shape == (9, 9)
        assert abs(M).max() == 0.0

    def test_negative_weight_rejected(self, square_mesh):
        with pytest.raises(MonotonicityViolation):
            assemble_weighted_mass(square_mesh(2), lambda x: x[..., 0] - 0.5)

    def test_negative_weight_allowed_without_check(self, square_mesh):
        M = assemble_weighted_mass(square_mesh(2), -1.0, check_sign=False)

        np.testing.assert_allclose(M.toarray(), -assemble_mass(square_mesh(2)).toarray())

    def test_weight_scales_linearly(self, square_mesh):
        mesh = square_mesh(2)

        np.testing.assert_allclose(
            assemble_weighted_mass(mesh, 3.0).toarray(), 3.0 * assemble_mass(mesh).toarray(), atol=1e-15
        )


class TestSemilinearResidual:
    """Test the quadrature of a(x, y_h)."""

    def test_zero_nonlinearity(self, square_mesh, zero_nl, rng):
        mesh = square_mesh(2)
        y = FeFunction.from_interior(mesh, rng.normal(size=mesh.interior.size))

        np.testing.assert_array_equal(assemble_semilinear_residual(mesh, y, zero_nl), 0.0)

    def test_linear_equals_mass_product(self, square_mesh, rng):
        mesh = square_mesh(3)
        y = FeFunction.from_interior(mesh, rng.normal(size=mesh.interior.size))
        linear = make_nonlinearity("linear")

        np.testing.assert_allclose(
            assemble_semilinear_residual(mesh, y, linear), assemble_mass(mesh) @ y.interior_values, atol=1e-14
        )

    def test_cubic_of_constant(self, unconstrained_square, cubic):
        c = 0.7
        y = FeFunction(unconstrained_square, np.full(4, c))
        M = assemble_mass(unconstrained_square)

        np.testing.assert_allclose(
            assemble_semilinear_residual(unconstrained_square, y, cubic),
            c ** 3 * np.asarray(M.sum(axis=1)).ravel(),
            atol=1e-15,
        )

    def test_foreign_state_rejected(self, square_mesh, cubic):
        with pytest.raises(MeshMismatch):
            assemble_semilinear_residual(square_mesh(2), FeFunction.zeros(square_mesh(1)), cubic)


class TestDiracLoad:
    """Test the load of point sources."""

    def test_source_at_vertex(self, square_mesh):
        mesh = square_mesh(2)
        load = dirac_load_vector(mesh, [[0.5, 0.5]], [1.0])
        k = int(np.argmax(load))

        assert load.sum() == pytest.approx(1.0)
        assert load[k] == pytest.approx(1.0)
        np.testing.assert_allclose(mesh.vertices[mesh.interior[k]], (0.5, 0.5))

    def test_source_inside_cell(self, square_mesh):
        """A generic point spreads its amplitude over the three corners of its cell."""
        mesh = square_mesh(3)
        load = dirac_load_vector(mesh, [[0.3, 0.33]], [1.0])

        assert np.count_nonzero(load) == 3
        assert np.all(load >= 0.0)
        assert load.sum() == pytest.approx(1.0)

    def test_linear_in_amplitudes(self, square_mesh, rng):
        mesh = square_mesh(3)
        points = [[0.3, 0.33], [0.71, 0.6]]
        u, v = rng.normal(size=2), rng.normal(size=2)

        np.testing.assert_allclose(
            dirac_load_vector(mesh, points, 2.0 * u - v),
            2.0 * dirac_load_vector(mesh, points, u) - dirac_load_vector(mesh, points, v),
            atol=1e-14,
        )

    def test_wrong_amplitude_count(self, square_mesh):
        with pytest.raises(ValueError):
            dirac_load_vector(square_mesh(2), [[0.5, 0.5]], [1.0, 2.0])

    def test_point_values_match_evaluate(self, square_mesh, rng):
        mesh = square_mesh(3)
        fn = FeFunction.from_interior(mesh, rng.normal(size=mesh.interior.size))
        points = [[0.3, 0.33], [0.71, 0.6]]

        np.testing.assert_allclose(locate_sources(mesh, points).values(fn), evaluate(fn, points), atol=1e-14)

    def test_load_is_dual_to_point_values(self, square_mesh, rng):
        """(load(u), v_h) on the dofs equals sum_z u_z v_h(z)."""
        mesh = square_mesh(3)
        sources = locate_sources(mesh, [[0.3, 0.33], [0.71, 0.6]])
        fn = FeFunction.from_interior(mesh, rng.normal(size=mesh.interior.size))
        u = rng.normal(size=2)

        assert sources.load(u) @ fn.interior_values == pytest.approx(u @ sources.values(fn))


class TestSolveSpd:
    """Test Jacobi-preconditioned CG."""

    def test_identity(self, rng):
        rhs = rng.normal(size=12)

        np.testing.assert_allclose(solve_spd(sp.identity(12, format="csr"), rhs), rhs)

    def test_matches_dense_solve(self, square_mesh, rng):
        K = assemble_stiffness(square_mesh(3))
        rhs = rng.normal(size=K.shape[0])

        np.testing.assert_allclose(solve_spd(K, rhs), np.linalg.solve(K.toarray(), rhs), rtol=1e-9, atol=1e-12)

    def test_residual_below_tolerance(self, square_mesh, rng):
        op = assemble_stiffness(square_mesh(4)) + assemble_mass(square_mesh(4))
        rhs = rng.normal(size=op.shape[0])
        x = solve_spd(op, rhs, tol_lin=1e-10)

        assert np.linalg.norm(rhs - op @ x) <= 1e-10 * np.linalg.norm(rhs)

    def test_zero_rhs(self, square_mesh):
        K = assemble_stiffness(square_mesh(2))

        np.testing.assert_array_equal(solve_spd(K, np.zeros(K.shape[0])), 0.0)

    def test_iteration_cap(self, square_mesh, rng):
        K = assemble_stiffness(square_mesh(3))

        with pytest.raises(LinearSolveFailure) as exc:
            solve_spd(K, rng.normal(size=K.shape[0]), max_iter=1)
        assert exc.value.iterations == 1

    def test_indefinite_rejected(self):
        op = sp.csr_matrix(np.array([[1.0, 2.0], [2.0, 1.0]]))

        with pytest.raises(LinearSolveFailure):
            solve_spd(op, np.array([1.0, -1.0]))


class TestIntegration:
    def test_integrate_constant(self, square_mesh):
        assert integrate(square_mesh(2), 1.0) == pytest.approx(1.0)

    def test_integrate_polynomial(self, square_mesh):
        """Degree-4 polynomials are integrated exactly on any mesh."""
        value = integrate(square_mesh(1), lambda x: x[..., 0] ** 2 * x[..., 1] ** 2)

        assert value == pytest.approx(1.0 / 9.0, rel=1e-13)

    def test_l2_inner_of_p1_functions(self, square_mesh, rng):
        mesh = square_mesh(3)
        f = FeFunction.from_interior(mesh, rng.normal(size=mesh.interior.size))
        g = FeFunction.from_interior(mesh, rng.normal(size=mesh.interior.size))

        assert l2_inner(mesh, f, g) == pytest.approx(
            f.interior_values @ (assemble_mass(mesh) @ g.interior_values), rel=1e-12
        )


class TestProlongation:
    """Test exact representation on nested meshes."""

    def test_values_preserved(self, square_mesh, rng):
        coarse, fine = square_mesh(1), square_mesh(3)
        fn = FeFunction.from_interior(coarse, rng.normal(size=coarse.interior.size))
        lifted = prolongate(fn, fine)

        np.testing.assert_allclose(lifted.values[: coarse.n_vertices], fn.values)
        np.testing.assert_allclose(lifted.values, evaluate(fn, fine.vertices), atol=1e-14)

    def test_midpoint_average(self, square_mesh, rng):
        coarse, fine = square_mesh(2), square_mesh(3)
        fn = FeFunction.from_interior(coarse, rng.normal(size=coarse.interior.size))
        lifted = prolongate(fn, fine)
        a, b = fine.parent_edges[0]

        assert lifted.values[coarse.n_vertices] == pytest.approx(0.5 * (fn.values[a] + fn.values[b]))

    def test_same_mesh_returns_input(self, square_mesh):
        fn = FeFunction.zeros(square_mesh(2))

        assert prolongate(fn, square_mesh(2)) is fn

    def test_unrelated_meshes_rejected(self, square_mesh):
        other = build_mesh(3, polygon=UNIT_SQUARE)

        with pytest.raises(MeshMismatch):
            prolongate(FeFunction.zeros(square_mesh(1)), other)

    def test_coarsening_rejected(self, square_mesh):
        with pytest.raises(MeshMismatch):
            prolongate(FeFunction.zeros(square_mesh(3)), square_mesh(1))

    def test_boundary_values_rejected(self, square_mesh):
        mesh = square_mesh(1)

        with pytest.raises(ValueError):
            FeFunction(mesh, np.ones(mesh.n_vertices))


class TestNormErrors:
    """Test the L2, L1 and local maximum-norm distances."""

    def test_prolongated_function_has_zero_error(self, square_mesh, rng):
        coarse, fine = square_mesh(1), square_mesh(3)
        fn = FeFunction.from_interior(coarse, rng.normal(size=coarse.interior.size))
        errors = norm_errors(fine, prolongate(fn, fine), fn)

        assert errors == pytest.approx({"l2": 0.0, "l1": 0.0, "linf": 0.0}, abs=1e-14)

    def test_constant_field(self, square_mesh):
        errors = norm_errors(square_mesh(2), FeFunction.zeros(square_mesh(2)), 1.0)

        assert errors == pytest.approx({"l2": 1.0, "l1": 1.0, "linf": 1.0})

    def test_l1_bounded_by_l2(self, square_mesh, rng):
        """On a domain of unit area Cauchy-Schwarz gives ||e||_1 <= ||e||_2."""
        mesh = square_mesh(3)
        fn = FeFunction.from_interior(mesh, rng.normal(size=mesh.interior.size))
        errors = norm_errors(mesh, fn, lambda x: np.sin(np.pi * x[..., 0]))

        assert errors["l1"] <= errors["l2"] + 1e-14

    def test_maximum_restricted_to_subdomain(self, square_mesh):
        mesh = square_mesh(3)
        values = np.zeros(mesh.n_vertices)
        corner = int(np.argmin(np.linalg.norm(mesh.vertices - [0.125, 0.125], axis=1)))
        values[corner] = 5.0
        fn = FeFunction(mesh, values)

        assert norm_errors(mesh, fn, 0.0)["linf"] == pytest.approx(5.0)
        assert norm_errors(mesh, fn, 0.0, Subdomain.scaled(mesh, 0.5))["linf"] == 0.0


class TestSubdomain:
    def test_scaled_square(self, square_mesh):
        sub = Subdomain.scaled(square_mesh(0), 0.5)

        assert sub.contains([[0.5, 0.5], [0.25, 0.75]]).all()
        assert not sub.contains([[0.1, 0.5]])[0]
        assert sub.distance_to_boundary_ok(square_mesh(0))

    def test_disk(self, square_mesh):
        sub = Subdomain.disk((0.5, 0.5), 0.2)

        np.testing.assert_array_equal(sub.contains([[0.5, 0.65], [0.5, 0.8]]), [True, False])
        assert sub.distance_to_boundary_ok(square_mesh(0))
        assert not Subdomain.disk((0.5, 0.5), 0.6).distance_to_boundary_ok(square_mesh(0))

    def test_nonpositive_radius(self):
        with pytest.raises(ValueError):
            Subdomain.disk((0.5, 0.5), 0.0)
