"""
Progress tracking for refinement studies, with per-level timings and estimates.
"""

import logging
import threading
import time
from typing import Dict, List, Optional


logger = logging.getLogger(__name__)


class ProgressTracker:
    """
    Track which levels of a study are done and how long each took.

    Safe to update from the worker threads of a study.
    """

    def __init__(self, study: str, levels: List[int]):
        """
        Initialize progress tracker.

        Args:
            study: Name of the study (for log lines)
            levels: All levels that will be solved, reference included
        """
        self.study = study
        self.levels = list(levels)
        self.start_time = time.perf_counter()
        self._started: Dict[int, float] = {}
        self.level_timings: Dict[int, float] = {}
        self._lock = threading.Lock()

    def start_level(self, level: int):
        with self._lock:
            self._started[level] = time.perf_counter()
        logger.debug(f"[{self.study}] level {level} started")

    def complete_level(self, level: int):
        """Mark a level done and log progress with a remaining-time estimate."""
        with self._lock:
            duration = time.perf_counter() - self._started.pop(level, self.start_time)
            self.level_timings[level] = duration
            done = len(self.level_timings)
            remaining = self._estimate_remaining()
        logger.info(
            f"[{self.study}] level {level} done in {self._format_duration(duration)} "
            f"({done}/{len(self.levels)}, ~{remaining} remaining)"
        )

    def _estimate_remaining(self) -> str:
        # Each refinement multiplies the work by about 2^d; use the last ratio seen.
        pending = [lvl for lvl in self.levels if lvl not in self.level_timings]
        if not pending or not self.level_timings:
            return "0s"
        last_level = max(self.level_timings)
        last = self.level_timings[last_level]
        growth = 4.0
        if last_level - 1 in self.level_timings and self.level_timings[last_level - 1] > 0:
            growth = max(1.0, last / self.level_timings[last_level - 1])
        estimate = sum(last * growth ** max(0, lvl - last_level) for lvl in pending)
        return self._format_duration(estimate)

    @staticmethod
    def _format_duration(seconds: float) -> str:
        """Format duration in human-readable format"""
        if seconds < 60:
            return f"{seconds:.1f}s"
        elif seconds < 3600:
            mins = int(seconds / 60)
            secs = int(seconds % 60)
            return f"{mins}m {secs}s"
        else:
            hours = int(seconds / 3600)
            mins = int((seconds % 3600) / 60)
            return f"{hours}h {mins}m"

    @property
    def elapsed(self) -> float:
        return time.perf_counter() - self.start_time

    def generate_report(self, slowest: Optional[int] = None) -> str:
        """
        Generate final timing report.

        Returns:
            One line per level, sorted by level
        """
        lines = [f"{self.study}: total {self._format_duration(self.elapsed)}"]
        items = sorted(self.level_timings.items())
        if slowest is not None:
            items = sorted(items, key=lambda kv: kv[1], reverse=True)[:slowest]
        for level, duration in items:
            lines.append(f"  level {level:>2}: {self._format_duration(duration)}")
        return "\n".join(lines)
