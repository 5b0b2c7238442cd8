"""
Unit tests for the built-in nonlinearities.
"""

import numpy as np
import pytest

from src.errors import MonotonicityViolation
from src.solvers.nonlinearity import NONLINEARITY_REGISTRY, Nonlinearity, check_consistency, make_nonlinearity


class TestRegistry:
    """Test construction of registered nonlinearities."""

    @pytest.mark.parametrize("name", sorted(NONLINEARITY_REGISTRY))
    def test_consistent_derivatives(self, name, rng):
        check_consistency(make_nonlinearity(name), rng=rng)

    @pytest.mark.parametrize("name", sorted(NONLINEARITY_REGISTRY))
    def test_vanishes_at_zero(self, name):
        nl = make_nonlinearity(name)

        assert nl.a(np.zeros((1, 2)), np.zeros(1))[0] == 0.0

    def test_coefficient(self):
        nl = make_nonlinearity("cubic", {"coefficient": 2.0})

        assert nl.a(np.zeros((1, 2)), np.array([2.0]))[0] == pytest.approx(16.0)
        assert nl.parameters == {"coefficient": 2.0}

    def test_unknown_name(self):
        with pytest.raises(ValueError, match="Available"):
            make_nonlinearity("quintic")

    def test_negative_coefficient(self):
        with pytest.raises(MonotonicityViolation):
            make_nonlinearity("arctan", {"coefficient": -1.0})

    def test_linear_flag(self):
        assert make_nonlinearity("zero").is_linear
        assert make_nonlinearity("linear").is_linear
        assert not make_nonlinearity("cubic").is_linear


class TestAdmissibility:
    """Test the growth conditions by dimension."""

    def test_everything_admissible_in_2d(self):
        assert all(make_nonlinearity(name).admissible_for_dimension(2) for name in NONLINEARITY_REGISTRY)

    def test_cubic_rejected_in_3d(self):
        assert not make_nonlinearity("cubic").admissible_for_dimension(3)

    def test_arctan_admissible_in_3d(self):
        assert make_nonlinearity("arctan").admissible_for_dimension(3)


class TestConsistencyCheck:
    """Test the sample-based self-check."""

    def test_decreasing_rejected(self, rng):
        nl = Nonlinearity(
            name="decreasing",
            a=lambda x, y: -y,
            a_y=lambda x, y: -np.ones_like(y),
            a_yy=lambda x, y: np.zeros_like(y),
            growth={"a": 1.0, "a_y": 0.0, "a_yy": 0.0},
        )

        with pytest.raises(MonotonicityViolation):
            check_consistency(nl, rng=rng)

    def test_wrong_derivative_rejected(self, rng):
        nl = Nonlinearity(
            name="wrong",
            a=lambda x, y: y ** 3,
            a_y=lambda x, y: y ** 2,
            a_yy=lambda x, y: 2.0 * y,
            growth={"a": 3.0, "a_y": 2.0, "a_yy": 1.0},
        )

        with pytest.raises(ValueError, match="da/dy"):
            check_consistency(nl, rng=rng)

    def test_wrong_second_derivative_rejected(self, rng):
        nl = Nonlinearity(
            name="wrong",
            a=lambda x, y: y ** 3,
            a_y=lambda x, y: 3.0 * y ** 2,
            a_yy=lambda x, y: 3.0 * y,
            growth={"a": 3.0, "a_y": 2.0, "a_yy": 1.0},
        )

        with pytest.raises(ValueError, match="d2a/dy2"):
            check_consistency(nl, rng=rng)
