"""
Vehicle node state: kinematics plus the per-node protocol and queue state the
event loop mutates.
"""

from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, Optional, Set, Tuple

from config.constants import DEFAULT_QUEUE_CAPACITY, DEFAULT_SUSPICION_WINDOW
from services.geo_mobility import Position
from services.protocol import ForwardingWindow, ReliabilityState, RequestId, RouteEntry, RouteTable
from services.spectrum import ChannelSet
from services.traffic import DataPacket, DropTailQueue


@dataclass(eq=False)
class VehicleNode:
    """One on-board unit."""

    node_id: int
    position: Position
    velocity: Tuple[float, float] = (0.0, 0.0)
    speed: float = 0.0
    waypoint: Optional[Position] = None
    step_time: float = 0.0
    malicious: bool = False
    queue_capacity: int = DEFAULT_QUEUE_CAPACITY
    suspicion_window: int = DEFAULT_SUSPICION_WINDOW

    channels: ChannelSet = field(default_factory=ChannelSet)
    last_channel: Optional[int] = None
    busy: bool = False

    queue: DropTailQueue = field(init=False)
    pending: Dict[int, Deque[DataPacket]] = field(default_factory=dict)
    reliability: ReliabilityState = field(default_factory=ReliabilityState)
    observations: ForwardingWindow = field(init=False)

    route_tables: Dict[int, RouteTable] = field(default_factory=dict)
    active_routes: Dict[int, RouteEntry] = field(default_factory=dict)
    discovering: Dict[int, RequestId] = field(default_factory=dict)
    seen_requests: Set = field(default_factory=set)
    rreq_receipts: Dict[tuple, Tuple[float, Position]] = field(default_factory=dict)
    reported_failures: Set[tuple] = field(default_factory=set)
    request_seq: int = 0

    def __post_init__(self):
        self.queue = DropTailQueue(self.queue_capacity)
        self.observations = ForwardingWindow(self.suspicion_window)

    def position_at(self, t: float) -> Position:
        """Position extrapolated from the last mobility step with the current velocity."""
        dt = t - self.step_time
        if dt <= 0.0:
            return self.position
        vx, vy = self.velocity
        return Position(self.position.x + vx * dt, self.position.y + vy * dt)

    def next_request_id(self) -> RequestId:
        self.request_seq += 1
        return (self.node_id, self.request_seq)

    def remember_receipt(self, request_id: RequestId, path: Tuple[int, ...], time: float) -> None:
        self.rreq_receipts[(request_id, path)] = (time, self.position_at(time))

    def receipt(self, request_id: RequestId, path: Tuple[int, ...]) -> Optional[Tuple[float, Position]]:
        return self.rreq_receipts.get((request_id, path))

    def forget_request(self, request_id: RequestId) -> None:
        """Drops duplicate-suppression keys and RREQ receipts of a finished discovery."""
        self.seen_requests = {k for k in self.seen_requests if k != request_id and k[0] != request_id}
        self.rreq_receipts = {k: v for k, v in self.rreq_receipts.items() if k[0] != request_id}

    @property
    def buffered(self) -> int:
        """Packets held at this node, queued or waiting for a route."""
        return len(self.queue) + sum(len(waiting) for waiting in self.pending.values())

    def hold(self, packet: DataPacket) -> None:
        self.pending.setdefault(packet.dest, deque()).append(packet)

    def release(self, dest: int) -> Deque[DataPacket]:
        return self.pending.pop(dest, deque())
