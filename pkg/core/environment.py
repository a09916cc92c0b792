"""
Host environment detection.

Sizes the sweep worker pool from the CPUs and memory the host actually has.
"""

import os
from dataclasses import dataclass
from typing import Dict, Optional

import psutil

# rough resident size of one 200-node run
RUN_MEMORY_BYTES = 256 * 1024 * 1024


@dataclass(frozen=True)
class RuntimeInfo:
    logical_cpus: int
    physical_cpus: int
    available_memory: int


class EnvironmentDetector:
    """Detects the CPU and memory resources available to the simulator."""

    def __init__(self):
        self._info: Optional[RuntimeInfo] = None

    def detect_all(self) -> Dict[str, int]:
        info = self.runtime
        return {
            'logical_cpus': info.logical_cpus,
            'physical_cpus': info.physical_cpus,
            'available_memory': info.available_memory,
        }

    @property
    def runtime(self) -> RuntimeInfo:
        if self._info is None:
            self._info = self._detect_runtime()
        return self._info

    def _detect_runtime(self) -> RuntimeInfo:
        logical = psutil.cpu_count(logical=True) or os.cpu_count() or 1
        physical = psutil.cpu_count(logical=False) or logical
        try:
            # honour CPU affinity masks (containers, taskset)
            logical = min(logical, len(psutil.Process().cpu_affinity()))
        except (AttributeError, psutil.Error, OSError):
            pass
        return RuntimeInfo(logical, min(physical, logical), psutil.virtual_memory().available)

    def sweep_workers(self, cells: int, requested: Optional[int] = None) -> int:
        """Worker processes for a sweep of `cells` independent runs."""
        if cells <= 1:
            return 1
        if requested is not None:
            return max(1, min(requested, cells))
        info = self.runtime
        by_memory = max(1, info.available_memory // RUN_MEMORY_BYTES)
        return max(1, min(cells, info.physical_cpus, by_memory))


_environment_detector = None


def get_environment_detector() -> EnvironmentDetector:
    """Returns the global detector, creating it on first use."""
    global _environment_detector
    if _environment_detector is None:
        _environment_detector = EnvironmentDetector()
    return _environment_detector
