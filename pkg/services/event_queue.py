"""
Time-ordered event heap for the simulation loop.
"""

import heapq
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, List, Optional, Tuple

from core.errors import InvariantViolation


class EventKind(Enum):
    MESSAGE_DELIVERY = "message_delivery"
    MOBILITY_STEP = "mobility_step"
    PU_TRANSITION = "pu_transition"
    TRAFFIC_EMIT = "traffic_emit"
    DISCOVERY_TIMEOUT = "discovery_timeout"
    METRICS_SAMPLE = "metrics_sample"
    QUEUE_SERVICE = "queue_service"
    REPLY_DUE = "reply_due"
    ROUND_EXPIRY = "round_expiry"


@dataclass(frozen=True)
class Event:
    time: float
    sequence: int
    kind: EventKind
    payload: Any = field(default=None, compare=False)


class EventQueue:
    """
    Events pop in non-decreasing time; equal times pop in insertion order.

    Scheduling before the current time raises InvariantViolation, so no event
    can run earlier than the event that scheduled it.
    """

    def __init__(self):
        self._heap: List[Tuple[float, int, Event]] = []
        self._sequence = 0
        self.now = 0.0

    def __len__(self) -> int:
        return len(self._heap)

    def has_events(self) -> bool:
        return bool(self._heap)

    def schedule(self, time: float, kind: EventKind, payload: Any = None) -> Event:
        if time < self.now:
            raise InvariantViolation(
                f"{kind.value} scheduled at {time:.9f} before current time {self.now:.9f}")
        event = Event(float(time), self._sequence, kind, payload)
        self._sequence += 1
        heapq.heappush(self._heap, (event.time, event.sequence, event))
        return event

    def peek_time(self) -> Optional[float]:
        return self._heap[0][0] if self._heap else None

    def pop(self) -> Optional[Event]:
        if not self._heap:
            return None
        _, _, event = heapq.heappop(self._heap)
        self.now = event.time
        return event
