"""
Per-run packet accounting and the final MetricsReport.
"""

import math
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Set, Tuple

from core.errors import InvariantViolation

DROP_CAUSES = ('queue_overflow', 'no_route', 'local_maximum', 'link_failure', 'hop_limit',
               'malicious_discard')


@dataclass(frozen=True)
class MetricsSample:
    time: float
    sent: int
    delivered: int
    dropped: int


@dataclass(frozen=True)
class MetricsReport:
    """Immutable summary of one run."""

    protocol: str
    node_count: int
    seed: int
    run_time: float
    sent: int
    delivered: int
    dropped: int
    dropped_by_cause: Tuple[Tuple[str, int], ...]
    in_flight_at_end: int
    pdr: Optional[float]
    throughput_pps: float
    throughput_bps: float
    mean_e2e_delay: Optional[float]
    discoveries: int = 0
    route_errors: int = 0
    suspicion_rounds: int = 0
    samples: Tuple[MetricsSample, ...] = ()

    def drops(self, cause: str) -> int:
        return dict(self.dropped_by_cause).get(cause, 0)

    def to_dict(self) -> Dict:
        return asdict(self)


class MetricsCollector:
    """Counts every packet from creation to delivery or drop."""

    def __init__(self, packet_size_bits: float):
        self.packet_size_bits = packet_size_bits
        self.sent = 0
        self.delivered = 0
        self.dropped_by_cause: Dict[str, int] = {cause: 0 for cause in DROP_CAUSES}
        self.delays: List[float] = []
        self.live: Set[int] = set()
        self.discoveries = 0
        self.route_errors = 0
        self.suspicion_rounds = 0
        self.samples: List[MetricsSample] = []

    @property
    def dropped(self) -> int:
        return sum(self.dropped_by_cause.values())

    def on_sent(self, packet_id: int) -> None:
        self.sent += 1
        self.live.add(packet_id)

    def on_delivered(self, packet_id: int, delay: float, link_delay_sum: float) -> None:
        self._retire(packet_id)
        # a packet cannot arrive faster than the link delays it accrued
        if delay < link_delay_sum * (1.0 - 1e-12):
            raise InvariantViolation(
                f"packet {packet_id} delay {delay} below its link delays {link_delay_sum}")
        self.delivered += 1
        self.delays.append(delay)

    def on_dropped(self, packet_id: int, cause: str) -> None:
        if cause not in self.dropped_by_cause:
            raise InvariantViolation(f"unknown drop cause {cause!r}")
        self._retire(packet_id)
        self.dropped_by_cause[cause] += 1

    def _retire(self, packet_id: int) -> None:
        if packet_id not in self.live:
            raise InvariantViolation(f"packet {packet_id} retired twice or never sent")
        self.live.remove(packet_id)

    def sample(self, time: float) -> MetricsSample:
        snapshot = MetricsSample(time, self.sent, self.delivered, self.dropped)
        self.samples.append(snapshot)
        return snapshot

    def report(self, protocol: str, node_count: int, seed: int, run_time: float) -> MetricsReport:
        """Builds the report and checks sent = delivered + dropped + in flight."""
        in_flight = len(self.live)
        if self.sent != self.delivered + self.dropped + in_flight:
            raise InvariantViolation(
                f"packet conservation broken: sent={self.sent} delivered={self.delivered} "
                f"dropped={self.dropped} in_flight={in_flight}")
        return collect_metrics(
            protocol=protocol, node_count=node_count, seed=seed, run_time=run_time,
            sent=self.sent, delivered=self.delivered, dropped_by_cause=self.dropped_by_cause,
            in_flight_at_end=in_flight, delays=self.delays, packet_size_bits=self.packet_size_bits,
            discoveries=self.discoveries, route_errors=self.route_errors,
            suspicion_rounds=self.suspicion_rounds, samples=tuple(self.samples))


def collect_metrics(protocol: str, node_count: int, seed: int, run_time: float, sent: int,
                    delivered: int, dropped_by_cause: Dict[str, int], in_flight_at_end: int,
                    delays: List[float], packet_size_bits: float, **extra) -> MetricsReport:
    """PDR, throughput and mean end-to-end delay; empty ratios are None, not zero."""
    dropped = sum(dropped_by_cause.values())
    if sent != delivered + dropped + in_flight_at_end:
        raise InvariantViolation(
            f"packet conservation broken: {sent} != {delivered} + {dropped} + {in_flight_at_end}")
    pdr = delivered / sent if sent > 0 else None
    throughput = delivered / run_time
    mean_delay = math.fsum(delays) / len(delays) if delays else None
    return MetricsReport(
        protocol=protocol, node_count=node_count, seed=seed, run_time=run_time,
        sent=sent, delivered=delivered, dropped=dropped,
        dropped_by_cause=tuple(sorted(dropped_by_cause.items())),
        in_flight_at_end=in_flight_at_end, pdr=pdr, throughput_pps=throughput,
        throughput_bps=throughput * packet_size_bits, mean_e2e_delay=mean_delay, **extra)
