"""
Control vectors, box bounds and the diagnostics produced by the optimizer.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np


ACTIVE_LOWER = "lower"
ACTIVE_UPPER = "upper"
FREE = "free"


@dataclass(frozen=True, eq=False)
class ControlVector:
    """Amplitudes u_z, one per point of the ordered source set."""

    amplitudes: np.ndarray

    def __post_init__(self):
        values = np.array(self.amplitudes, dtype=float).reshape(-1)
        if not np.all(np.isfinite(values)):
            raise ValueError("Control amplitudes must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "amplitudes", values)

    @classmethod
    def of_length(cls, values: Any, count: int) -> "ControlVector":
        vector = cls(np.asarray(values, dtype=float))
        if len(vector) != count:
            raise ValueError(f"Control has {len(vector)} amplitudes but there are {count} source points")
        return vector

    def __len__(self) -> int:
        return int(self.amplitudes.size)

    def __array__(self, dtype=None, copy=None):
        return self.amplitudes if dtype is None else self.amplitudes.astype(dtype)

    def to_list(self) -> List[float]:
        return [float(v) for v in self.amplitudes]


@dataclass(frozen=True, eq=False)
class ControlBounds:
    """Box constraints a_z < b_z on every amplitude."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.array(self.lower, dtype=float).reshape(-1)
        upper = np.array(self.upper, dtype=float).reshape(-1)
        if lower.shape != upper.shape:
            raise ValueError(f"Bounds have {lower.size} lower and {upper.size} upper entries")
        bad = np.flatnonzero(~(lower < upper))
        if bad.size:
            raise ValueError(
                f"Bounds need a_z < b_z; violated at point(s) {', '.join(str(int(i)) for i in bad)}"
            )
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def uniform(cls, lower: float, upper: float, count: int) -> "ControlBounds":
        return cls(np.full(count, float(lower)), np.full(count, float(upper)))

    def __len__(self) -> int:
        return int(self.lower.size)

    def project(self, u: Any) -> np.ndarray:
        return project(u, self)

    def contains(self, u: Any) -> bool:
        u = np.asarray(u, dtype=float)
        return bool(np.all(u >= self.lower) and np.all(u <= self.upper))

    def localized(self, center: Sequence[float], radius: float) -> "ControlBounds":
        """Intersection with the max-norm ball of ``radius`` about ``center``."""
        if radius <= 0.0:
            raise ValueError(f"Localization radius must be positive, got {radius}")
        c = np.asarray(center, dtype=float).reshape(-1)
        if c.size != len(self):
            raise ValueError(f"Localization center has {c.size} entries, expected {len(self)}")
        lower = np.maximum(self.lower, c - radius)
        upper = np.minimum(self.upper, c + radius)
        if np.any(lower >= upper):
            raise ValueError("Localization ball does not meet the admissible box")
        return ControlBounds(lower, upper)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """``count`` uniform random admissible controls, shape (count, len)."""
        return rng.uniform(self.lower, self.upper, size=(count, len(self)))

    def to_dict(self) -> Dict[str, List[float]]:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}


def project(u: Any, bounds: ControlBounds) -> np.ndarray:
    """Componentwise clamp max(a_z, min(b_z, u_z))."""
    return np.maximum(bounds.lower, np.minimum(bounds.upper, np.asarray(u, dtype=float)))


def classify_active_set(u: np.ndarray, psi: np.ndarray, bounds: ControlBounds) -> List[str]:
    """Tag every amplitude as lower, upper or free.

    An amplitude sitting on both bounds (pinned box) takes the side the
    gradient pushes it to.
    """
    scale = np.maximum(1.0, np.maximum(np.abs(bounds.lower), np.abs(bounds.upper)))
    tol = 1e-10 * scale
    at_lower = u - bounds.lower <= tol
    at_upper = bounds.upper - u <= tol
    tags = []
    for lo, hi, g in zip(at_lower, at_upper, psi):
        if lo and hi:
            tags.append(ACTIVE_LOWER if g >= 0.0 else ACTIVE_UPPER)
        elif lo:
            tags.append(ACTIVE_LOWER)
        elif hi:
            tags.append(ACTIVE_UPPER)
        else:
            tags.append(FREE)
    return tags


@dataclass
class KktDiagnostics:
    """First-order information at a control.

    ``psi`` holds p(z) + alpha u_z; ``projection_residual`` is
    max_z |u_z - clamp(-p(z)/alpha)|.
    """

    psi: np.ndarray
    projection_residual: float
    active_set: List[str]
    objective: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "psi": [float(v) for v in self.psi],
            "projection_residual": float(self.projection_residual),
            "active_set": list(self.active_set),
            "objective": self.objective,
        }


@dataclass
class SoscReport:
    """Second-order check on the coordinates with |psi_z| <= tau."""

    tau: float
    critical_set: List[int]
    lambda_min: Optional[float]
    kappa_min: float
    verdict: bool
    details: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "tau": self.tau,
            "critical_set": list(self.critical_set),
            "lambda_min": self.lambda_min,
            "kappa_min": self.kappa_min,
            "verdict": self.verdict,
            **self.details,
        }
