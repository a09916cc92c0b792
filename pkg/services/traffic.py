"""
CBR traffic generation and drop-tail buffering.
"""

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Iterator, List, Optional, Tuple

import numpy as np

from core.errors import ConfigError


@dataclass
class DataPacket:
    """One CBR packet; mutated hop by hop while in flight."""

    packet_id: int
    flow_id: int
    source: int
    dest: int
    created_at: float
    size_bits: float
    path: Optional[Tuple[int, ...]] = None
    hops: int = 0
    link_delay_sum: float = 0.0
    trail: List[int] = field(default_factory=list)

    def next_hop(self, at_node: int) -> Optional[int]:
        """Next node on the assigned path, None when the path is unset or exhausted."""
        if self.path is None or at_node not in self.path:
            return None
        idx = self.path.index(at_node)
        return self.path[idx + 1] if idx + 1 < len(self.path) else None


class DropTailQueue:
    """FIFO buffer that discards arrivals once `capacity` packets are held."""

    def __init__(self, capacity: int):
        if capacity <= 0:
            raise ConfigError("queue capacity must be positive", field='queue_capacity')
        self.capacity = capacity
        self._items: Deque[DataPacket] = deque()
        self.overflows = 0

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self) -> Iterator[DataPacket]:
        return iter(self._items)

    @property
    def full(self) -> bool:
        return len(self._items) >= self.capacity

    def push(self, packet: DataPacket) -> bool:
        if self.full:
            self.overflows += 1
            return False
        self._items.append(packet)
        return True

    def pop(self) -> Optional[DataPacket]:
        return self._items.popleft() if self._items else None


def emit_cbr(rate: float, start: float, run_time: float, stop: Optional[float] = None) -> List[float]:
    """
    Creation times of a CBR flow: start + k / rate for every k with time
    before min(stop, run_time).

    Raises:
        ConfigError: rate is not positive
    """
    if not (math.isfinite(rate) and rate > 0):
        raise ConfigError(f"flow rate must be positive, got {rate}", field='rate')
    if start < 0:
        raise ConfigError(f"flow start must be non-negative, got {start}", field='start')
    end = run_time if stop is None else min(stop, run_time)
    if end <= start:
        return []
    count = int(math.ceil((end - start) * rate)) + 1
    times = start + np.arange(count, dtype=float) / rate
    return [float(t) for t in times[times < end]]
