"""
Monotone nonlinearities a(x, y) and their y-derivatives.

Only built-in nonlinearities are offered, so the derivatives are always
consistent with ``a``. Each entry records the growth exponents of a, da/dy and
d2a/dy2, which decide whether it is admissible in three dimensions.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np

from ..errors import MonotonicityViolation


logger = logging.getLogger(__name__)

ScalarField = Callable[[np.ndarray, np.ndarray], np.ndarray]

# Strict upper bounds on the growth exponent r in 3-D for a, da/dy, d2a/dy2.
GROWTH_LIMITS_3D = {"a": 3.0, "a_y": 2.0, "a_yy": 1.0}


@dataclass(frozen=True)
class Nonlinearity:
    """A Caratheodory function a(x, y) with its first and second y-derivatives.

    ``x`` has shape (..., d) and ``y`` shape (...); all callables broadcast.
    """

    name: str
    a: ScalarField
    a_y: ScalarField
    a_yy: ScalarField
    growth: Dict[str, float]
    constant: float = 1.0
    lipschitz: bool = False
    bounds_doc: Dict[str, str] = field(default_factory=dict)
    parameters: Dict[str, float] = field(default_factory=dict)

    def admissible_for_dimension(self, dim: int) -> bool:
        """Growth conditions of the state theory; every finite exponent is fine in 2-D."""
        if dim == 2:
            return True
        return all(self.growth[key] < limit for key, limit in GROWTH_LIMITS_3D.items())

    @property
    def is_linear(self) -> bool:
        return self.name in ("zero", "linear")


def _zero(_: Dict[str, float]) -> Nonlinearity:
    zero = lambda x, y: np.zeros_like(y, dtype=float)
    return Nonlinearity(
        name="zero",
        a=zero,
        a_y=zero,
        a_yy=zero,
        growth={"a": 0.0, "a_y": 0.0, "a_yy": 0.0},
        constant=0.0,
        lipschitz=True,
        bounds_doc={"phi0": "0", "phi1": "0", "phi2": "0"},
    )


def _linear(params: Dict[str, float]) -> Nonlinearity:
    c = float(params.get("coefficient", 1.0))
    return Nonlinearity(
        name="linear",
        a=lambda x, y: c * y,
        a_y=lambda x, y: np.full_like(y, c, dtype=float),
        a_yy=lambda x, y: np.zeros_like(y, dtype=float),
        growth={"a": 1.0, "a_y": 0.0, "a_yy": 0.0},
        constant=c,
        lipschitz=True,
        bounds_doc={"phi0": "0", "phi1": f"{c}", "phi2": "0"},
        parameters={"coefficient": c},
    )


def _cubic(params: Dict[str, float]) -> Nonlinearity:
    c = float(params.get("coefficient", 1.0))
    return Nonlinearity(
        name="cubic",
        a=lambda x, y: c * y ** 3,
        a_y=lambda x, y: 3.0 * c * y ** 2,
        a_yy=lambda x, y: 6.0 * c * y,
        growth={"a": 3.0, "a_y": 2.0, "a_yy": 1.0},
        constant=6.0 * c,
        lipschitz=False,
        bounds_doc={"phi0": "0", "phi1": "0", "phi2": "0"},
        parameters={"coefficient": c},
    )


def _arctan(params: Dict[str, float]) -> Nonlinearity:
    c = float(params.get("coefficient", 1.0))
    return Nonlinearity(
        name="arctan",
        a=lambda x, y: c * (y + np.arctan(y)),
        a_y=lambda x, y: c * (1.0 + 1.0 / (1.0 + y ** 2)),
        a_yy=lambda x, y: -2.0 * c * y / (1.0 + y ** 2) ** 2,
        growth={"a": 1.0, "a_y": 0.0, "a_yy": 0.0},
        constant=2.0 * c,
        lipschitz=True,
        bounds_doc={"phi0": f"{c} * pi / 2", "phi1": f"{2.0 * c}", "phi2": f"{c} * 3 sqrt(3) / 8"},
        parameters={"coefficient": c},
    )


NONLINEARITY_REGISTRY: Dict[str, Callable[[Dict[str, float]], Nonlinearity]] = {
    "zero": _zero,
    "linear": _linear,
    "cubic": _cubic,
    "arctan": _arctan,
}


def make_nonlinearity(name: str, parameters: Optional[Dict[str, float]] = None) -> Nonlinearity:
    """
    Build a registered nonlinearity.

    Args:
        name: One of ``zero``, ``linear``, ``cubic``, ``arctan``
        parameters: Optional ``{"coefficient": c}`` with ``c >= 0``

    Returns:
        Nonlinearity instance
    """
    if name not in NONLINEARITY_REGISTRY:
        raise ValueError(
            f"Unknown nonlinearity '{name}'. Available: {', '.join(sorted(NONLINEARITY_REGISTRY))}"
        )
    params = dict(parameters or {})
    if params.get("coefficient", 1.0) < 0.0:
        raise MonotonicityViolation(
            f"Nonlinearity '{name}' needs a nonnegative coefficient to stay monotone"
        )
    return NONLINEARITY_REGISTRY[name](params)


def check_consistency(
    nl: Nonlinearity,
    rng: Optional[np.random.Generator] = None,
    samples: int = 200,
    dim: int = 2,
    eps: float = 1e-6,
    rtol: float = 1e-5,
) -> None:
    """
    Sample-based self-check of monotonicity and derivative consistency.

    Central differences of ``a`` and ``a_y`` are compared with ``a_y`` and
    ``a_yy`` at random points.

    Raises:
        MonotonicityViolation: If da/dy is negative at a sample
        ValueError: If a derivative disagrees with its finite difference
    """
    rng = rng or np.random.default_rng(0)
    x = rng.uniform(0.0, 1.0, size=(samples, dim))
    y = rng.uniform(-3.0, 3.0, size=samples)

    slope = nl.a_y(x, y)
    if np.any(slope < 0.0):
        raise MonotonicityViolation(f"Nonlinearity '{nl.name}' has da/dy < 0 at a sample point")

    fd_first = (nl.a(x, y + eps) - nl.a(x, y - eps)) / (2.0 * eps)
    if not np.allclose(fd_first, slope, rtol=rtol, atol=rtol):
        raise ValueError(f"da/dy of '{nl.name}' is inconsistent with a")

    fd_second = (nl.a_y(x, y + eps) - nl.a_y(x, y - eps)) / (2.0 * eps)
    if not np.allclose(fd_second, nl.a_yy(x, y), rtol=rtol, atol=rtol):
        raise ValueError(f"d2a/dy2 of '{nl.name}' is inconsistent with da/dy")

    logger.debug(f"Nonlinearity '{nl.name}' passed the consistency check on {samples} samples")
