"""
Shared fixtures for the unit and integration tests.
"""

from dataclasses import replace

import numpy as np
import pytest

from src.fem.mesh import refine_uniform, triangulate_polygon
from src.solvers.nonlinearity import make_nonlinearity


UNIT_SQUARE = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]


@pytest.fixture
def unit_square():
    return [list(p) for p in UNIT_SQUARE]


@pytest.fixture
def square_mesh():
    """Factory for nested unit-square meshes; level k is refined from level k-1."""
    cache = {}

    def make(level: int):
        if level not in cache:
            cache[level] = triangulate_polygon(UNIT_SQUARE) if level == 0 else refine_uniform(make(level - 1))
        return cache[level]

    return make


@pytest.fixture
def unconstrained_square():
    """Level-0 unit square with no boundary flags, so every vertex is a dof."""
    mesh = triangulate_polygon(UNIT_SQUARE)
    return replace(mesh, boundary=np.zeros(mesh.n_vertices, dtype=bool))


@pytest.fixture
def cubic():
    return make_nonlinearity("cubic")


@pytest.fixture
def zero_nl():
    return make_nonlinearity("zero")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
