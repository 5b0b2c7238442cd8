"""
Convergence rate fitting on (h, error) data.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from ..errors import InsufficientData


logger = logging.getLogger(__name__)

# Power m of the |log h| factor in the expected error model h^2 |log h|^m.
LOG_POWERS: Dict[str, int] = {
    "state_l2": 0,
    "state_l1": 2,
    "adjoint_linf": 2,
    "gradient_gap": 3,
    "control_err": 3,
}

MIN_POINTS = 3


@dataclass(frozen=True)
class RateFit:
    """Least-squares line through (log h, log error)."""

    slope: float
    intercept: float
    r2: float
    points: int

    def to_dict(self) -> Dict[str, float]:
        return {"slope": self.slope, "intercept": self.intercept, "r2": self.r2, "points": self.points}


def _usable(pairs: Iterable[Tuple[float, float]]) -> List[Tuple[float, float]]:
    kept = []
    for h, err in pairs:
        if err is None or not (err > 0.0) or not math.isfinite(err):
            logger.warning(f"Dropping error {err!r} at h = {h:.4g} from the rate fit")
            continue
        if not h > 0.0:
            logger.warning(f"Dropping nonpositive mesh size h = {h!r} from the rate fit")
            continue
        kept.append((float(h), float(err)))
    return kept


def _regress(x: np.ndarray, y: np.ndarray) -> RateFit:
    result = stats.linregress(x, y)
    return RateFit(
        slope=float(result.slope),
        intercept=float(result.intercept),
        r2=float(result.rvalue ** 2),
        points=int(x.size),
    )


def fit_rate(pairs: Sequence[Tuple[float, float]]) -> RateFit:
    """
    Fit err ~ C h^s by least squares on logarithms.

    Args:
        pairs: (h, error) pairs

    Returns:
        RateFit with slope s, intercept log C and r^2

    Raises:
        InsufficientData: If fewer than three positive errors remain
    """
    kept = _usable(pairs)
    if len(kept) < MIN_POINTS:
        raise InsufficientData(
            f"Need at least {MIN_POINTS} positive errors to fit a rate, got {len(kept)}"
        )
    h, err = np.array(kept).T
    return _regress(np.log(h), np.log(err))


def fit_log_corrected_rate(pairs: Sequence[Tuple[float, float]], log_power: int) -> RateFit:
    """
    Fit err ~ C h^s |log h|^m with m fixed.

    The slope of log(err / |log h|^m) against log h estimates s; it is 2 when
    the error follows h^2 |log h|^m exactly.
    """
    kept = [(h, err) for h, err in _usable(pairs) if h != 1.0]
    if len(kept) < MIN_POINTS:
        raise InsufficientData(
            f"Need at least {MIN_POINTS} positive errors to fit a rate, got {len(kept)}"
        )
    h, err = np.array(kept).T
    log_h = np.log(h)
    return _regress(log_h, np.log(err) - log_power * np.log(np.abs(log_h)))


def nonincreasing_tail(errors: Sequence[Optional[float]], last: int = 3, slack: float = 0.05) -> bool:
    """True if the last ``last`` errors decrease, allowing one rise of at most ``slack``."""
    tail = [e for e in errors if e is not None][-last:]
    violations = 0
    for previous, current in zip(tail, tail[1:]):
        if current > previous:
            if current > (1.0 + slack) * previous:
                return False
            violations += 1
    return violations <= 1


def fit_or_none(pairs: Sequence[Tuple[float, float]], log_power: Optional[int] = None) -> Optional[RateFit]:
    """Like ``fit_rate`` but returns None instead of raising on too little data."""
    try:
        if log_power is None:
            return fit_rate(pairs)
        return fit_log_corrected_rate(pairs, log_power)
    except InsufficientData as e:
        logger.warning(str(e))
        return None
