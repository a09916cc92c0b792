"""
Discrete-event engine.

Owns the nodes, the event heap, radio delivery within the closed range disc,
the per-node drop-tail data plane and link-failure checks. The NHDF control
plane lives in services.protocol and calls back into the engine through the
methods in the "radio" and "data plane" sections.
"""

from dataclasses import dataclass, replace
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
from scipy.spatial import distance

from config.sim_config import FlowSpec, SimConfig
from core.errors import ConfigError, InvariantViolation
from services.event_queue import Event, EventKind, EventQueue
from services.geo_mobility import (
    HeadingPolicy,
    MobilityModel,
    Position,
    TimedFix,
    estimate_distance as ranged_distance,
    step_mobility,
)
from services.greedy import greedy_baseline_forward
from services.metric import LinkDelays, contention_backoff, queuing_delay
from services.metrics_collector import MetricsCollector, MetricsReport
from services.protocol import ControlMessage, MessageKind, NhdfProtocol, RequestId
from services.spectrum import (
    ChannelSet,
    PuActivityModel,
    PuTransition,
    common_idle_count,
    operating_channel,
    switching_delay,
)
from services.traffic import DataPacket, emit_cbr
from services.vehicle import VehicleNode
from utils.logger import log_debug, log_info
from utils.trace import TraceRecorder

PROTOCOLS = ('nhdf', 'greedy_baseline')

# lifetime of a discovery round, in discovery windows
ROUND_LIFETIME_WINDOWS = 2


@dataclass(frozen=True)
class DiscoveryRound:
    """Positions frozen when a discovery starts; channel sets of the round are read there."""

    request_id: RequestId
    origin: int
    target: int
    opened_at: float
    positions: Dict[int, Position]


@dataclass(frozen=True)
class Delivery:
    message: Union[ControlMessage, DataPacket]
    sender: int
    receiver: int


class Simulator:
    """One isolated, single-threaded run of one protocol on one configuration."""

    def __init__(self, config: SimConfig, protocol: str = 'nhdf', spectrum=None,
                 trace: Optional[TraceRecorder] = None):
        config.validate()
        if protocol not in PROTOCOLS:
            raise ConfigError(f"unknown protocol {protocol!r}", field='protocol')
        self.config = config
        self.protocol_name = protocol
        self.events = EventQueue()
        self.trace = trace if trace is not None else TraceRecorder()
        self.metrics = MetricsCollector(config.packet_size_bits)

        s = config.spectrum
        self.spectrum = spectrum if spectrum is not None else PuActivityModel(
            mean_on=s.mean_on, mean_off=s.mean_off, num_channels=config.num_channels,
            spatial_cells=s.spatial_cells, area_side=config.area_side, rng_seed=config.seed,
            miss_prob=s.miss_prob, false_alarm_prob=s.false_alarm_prob,
            horizon=config.run_time + config.mobility_dt)
        self.mobility = MobilityModel(config.area_side, config.max_speed,
                                      HeadingPolicy(config.heading_policy), rng_seed=config.seed)
        self._ranging_rng = np.random.default_rng([config.seed, 0x2551])

        self.nodes: Dict[int, VehicleNode] = self._place_nodes()
        self.flows: List[FlowSpec] = self._resolve_flows()
        self.rounds: Dict[RequestId, DiscoveryRound] = {}
        self.protocol = NhdfProtocol(self) if protocol == 'nhdf' else None

        self._moves = sorted(config.scripted_moves, key=lambda m: (m.time, m.node_id))
        self._packet_seq = 0
        self._distances = np.zeros((0, 0))
        self._neighbors: Dict[int, List[int]] = {}
        self._update_adjacency()

    @property
    def now(self) -> float:
        """Simulated time of the event being handled."""
        return self.events.now

    # ------------------------------------------------------------------ setup

    def _place_nodes(self) -> Dict[int, VehicleNode]:
        cfg = self.config
        malicious = set(cfg.malicious)
        nodes = {}
        placements = {p.node_id: p for p in cfg.placements}
        for node_id in range(cfg.node_count):
            placement = placements.get(node_id)
            if placement is not None:
                position = Position(float(placement.x), float(placement.y))
            else:
                position = self.mobility.random_position()
            node = VehicleNode(node_id, position, malicious=node_id in malicious,
                               queue_capacity=cfg.queue_capacity,
                               suspicion_window=cfg.protocol.suspicion_window)
            if placement is not None and self.mobility.heading_policy is HeadingPolicy.SCRIPTED:
                node.velocity = (float(placement.vx), float(placement.vy))
                node.speed = float(np.hypot(placement.vx, placement.vy))
            else:
                self.mobility.initialise(node)
            nodes[node_id] = node
        return nodes

    def _resolve_flows(self) -> List[FlowSpec]:
        cfg = self.config
        if cfg.zero_flows:
            return []
        if cfg.flows:
            return list(cfg.flows)
        if cfg.random_flows is None:
            return []
        rng = np.random.default_rng([cfg.seed, 0xF10])
        flows = []
        for _ in range(cfg.random_flows.count):
            source, dest = rng.choice(cfg.node_count, size=2, replace=False)
            flows.append(FlowSpec(int(source), int(dest), cfg.random_flows.rate))
        return flows

    def _update_adjacency(self) -> None:
        ids = sorted(self.nodes)
        coords = np.array([[self.nodes[i].position.x, self.nodes[i].position.y] for i in ids])
        self._distances = distance.cdist(coords, coords)
        within = self._distances <= self.config.tx_range
        np.fill_diagonal(within, False)
        self._neighbors = {i: [int(j) for j in np.flatnonzero(within[i])] for i in ids}

    def sorted_nodes(self) -> List[VehicleNode]:
        """Nodes in ascending id order, the order every sweep over nodes uses."""
        return [self.nodes[i] for i in sorted(self.nodes)]

    # ------------------------------------------------------------------ radio

    def neighbors(self, node_id: int) -> List[int]:
        """Radio neighbours at the last mobility step, ascending ids."""
        return self._neighbors[node_id]

    def in_range(self, a: int, b: int) -> bool:
        """Closed-disc range test at the last mobility step."""
        return a != b and self._distances[a, b] <= self.config.tx_range

    def estimate_distance(self, receiver: int, sender: int) -> float:
        """Distance the receiver infers from the sender's synthesised path loss."""
        true_distance = float(self._distances[receiver, sender])
        if true_distance <= 0.0:
            return 0.0
        rng = self._ranging_rng if self.config.ranging.noise_db > 0 else None
        return ranged_distance(true_distance, self.config.ranging, rng)

    def idle_set(self, node_id: int, discovery: Optional[DiscoveryRound] = None) -> ChannelSet:
        """Idle channels of a node, as sensed when the given discovery opened or else now."""
        if discovery is not None:
            return self.spectrum.idle_set(node_id, discovery.positions[node_id], discovery.opened_at)
        node = self.nodes[node_id]
        node.channels = self.spectrum.idle_set(node_id, node.position, self.now)
        return node.channels

    def link_delays(self, sender: int, receiver: int, size_bits: float,
                    previous_channel: Optional[int],
                    discovery: Optional[DiscoveryRound] = None) -> Optional[Tuple[LinkDelays, int]]:
        """Queuing, back-off and switching delay of one transmission and its channel; None without a common channel."""
        q = operating_channel(self.idle_set(sender, discovery), self.idle_set(receiver, discovery))
        if q is None:
            return None
        cfg = self.config
        contenders = len(self._neighbors[sender])
        p = q if previous_channel is None else previous_channel
        delays = LinkDelays(
            queuing=queuing_delay(size_bits, contenders, cfg.data_rate),
            backoff=contention_backoff(cfg.metric.collision_prob, contenders, cfg.metric.backoff_window),
            switching=switching_delay(p, q, cfg.spectrum.switch_step_delay))
        return delays, q

    def link_viable(self, a: int, b: int) -> bool:
        """A link can carry traffic: endpoints in range and sharing an idle channel."""
        return self.in_range(a, b) and common_idle_count(self.idle_set(a), self.idle_set(b)) > 0

    def _transmit(self, sender: int, receiver: int, message: ControlMessage,
                  discovery: Optional[DiscoveryRound]) -> bool:
        link = self.link_delays(sender, receiver, message.payload_size, message.channel, discovery)
        if link is None:
            return False
        delays, _ = link
        self.events.schedule(self.now + delays.total, EventKind.MESSAGE_DELIVERY,
                             Delivery(message, sender, receiver))
        self.trace.record(self.now, 'send', message.kind.value, sender, peer=receiver,
                          origin=message.origin, target=message.target,
                          request_id=list(message.request_id), delay=delays.total)
        return True

    def broadcast(self, sender: int, message: ControlMessage,
                  discovery: Optional[DiscoveryRound] = None) -> int:
        """Schedules one delivery per in-range receiver sharing a channel; returns how many."""
        return sum(1 for receiver in self._neighbors[sender]
                   if self._transmit(sender, receiver, message, discovery))

    def unicast(self, sender: int, receiver: int, message: ControlMessage,
                discovery: Optional[DiscoveryRound] = None) -> bool:
        """Sends to one receiver; False when it is out of range or shares no channel."""
        if not self.in_range(sender, receiver):
            return False
        return self._transmit(sender, receiver, message, discovery)

    # -------------------------------------------------------------- discovery

    def open_round(self, request_id: RequestId, origin: int, target: int) -> DiscoveryRound:
        """Snapshots positions for a new discovery and schedules the round's expiry."""
        discovery = DiscoveryRound(request_id, origin, target, self.now,
                                   {i: n.position for i, n in self.nodes.items()})
        self.rounds[request_id] = discovery
        self.events.schedule(self.now + ROUND_LIFETIME_WINDOWS * self.config.protocol.discovery_window,
                             EventKind.ROUND_EXPIRY, request_id)
        return discovery

    def _on_round_expiry(self, event: Event) -> None:
        request_id = event.payload
        self.rounds.pop(request_id, None)
        for node in self.nodes.values():
            node.forget_request(request_id)

    def schedule_discovery_timeout(self, source: int, dest: int, request_id: RequestId) -> None:
        """Closes the source's reply collection window after discovery_window seconds."""
        self.events.schedule(self.now + self.config.protocol.discovery_window,
                             EventKind.DISCOVERY_TIMEOUT, (source, dest, request_id))

    def schedule_reply(self, node_id: int, message: ControlMessage, discovery: DiscoveryRound) -> None:
        """Sends an RREP after the node's contention back-off."""
        contenders = len(self._neighbors[node_id])
        wait = contention_backoff(self.config.metric.collision_prob, contenders,
                                  self.config.metric.backoff_window)
        self.events.schedule(self.now + wait, EventKind.REPLY_DUE, (node_id, message, discovery))

    def _on_reply_due(self, event: Event) -> None:
        node_id, message, discovery = event.payload
        node = self.nodes[node_id]
        path = message.path_so_far
        idx = path.index(node_id)
        previous = path[idx - 1]
        receipt = node.receipt(message.request_id, path[:idx + 1])
        received_at, received_pos = receipt if receipt is not None else (self.now, node.position_at(self.now))
        link = self.link_delays(node_id, previous, message.payload_size, message.channel, discovery) \
            if self.in_range(node_id, previous) else None
        if link is None:
            self.trace.record(self.now, 'drop', MessageKind.RREP.value, node_id, peer=previous,
                              origin=message.origin, target=message.target,
                              request_id=list(message.request_id), cause='link_failure')
            return
        delays, channel = link
        fix = TimedFix(received_at, self.now, delays.total, received_pos, node.position_at(self.now))
        outgoing = replace(message, hop_fix=fix, channel=channel,
                           dest_fix=fix if node_id == message.target else message.dest_fix)
        self.events.schedule(self.now + delays.total, EventKind.MESSAGE_DELIVERY,
                             Delivery(outgoing, node_id, previous))
        self.trace.record(self.now, 'send', MessageKind.RREP.value, node_id, peer=previous,
                          origin=message.origin, target=message.target,
                          request_id=list(message.request_id), delay=delays.total)

    def _on_discovery_timeout(self, event: Event) -> None:
        source, dest, request_id = event.payload
        self.protocol.on_discovery_timeout(self.nodes[source], dest, request_id)

    def on_node_frozen(self, subject: int, participants: Iterable[int]) -> None:
        """Traces a freeze and lets the protocol break the routes through the subject."""
        participants = tuple(participants)
        self.trace.record(self.now, 'freeze', MessageKind.SQN_REPORT.value, subject,
                          participants=list(participants))
        self.protocol.exclude_frozen(subject, participants)

    # ------------------------------------------------------------- data plane

    def enqueue_data(self, node: VehicleNode, packet: DataPacket) -> bool:
        """Appends to the node's drop-tail queue, or drops the packet as queue_overflow."""
        if not node.queue.push(packet):
            self._drop_packet(node, packet, 'queue_overflow')
            return False
        if not node.busy:
            node.busy = True
            self.events.schedule(self.now, EventKind.QUEUE_SERVICE, node.node_id)
        return True

    def release_pending(self, node: VehicleNode, dest: int) -> None:
        """Moves packets held for a route into the node's queue, oldest first."""
        for packet in node.release(dest):
            self.enqueue_data(node, packet)

    def drop_pending(self, node: VehicleNode, dest: int, cause: str) -> None:
        """Drops every packet held for dest with the given cause."""
        for packet in node.release(dest):
            self._drop_packet(node, packet, cause)

    def _drop_packet(self, node: VehicleNode, packet: DataPacket, cause: str) -> None:
        self.metrics.on_dropped(packet.packet_id, cause)
        self.trace.record(self.now, 'drop', MessageKind.DATA.value, node.node_id,
                          origin=packet.source, target=packet.dest, cause=cause,
                          packet=packet.packet_id)

    def _hold_for_route(self, node: VehicleNode, packet: DataPacket) -> None:
        """Parks a packet until a route exists, starting a discovery if none is running."""
        if node.buffered >= node.queue_capacity:
            self._drop_packet(node, packet, 'queue_overflow')
            return
        node.hold(packet)
        if packet.dest not in node.discovering:
            self.protocol.originate_discovery(node, packet.dest)

    def _on_traffic_emit(self, event: Event) -> None:
        flow_id, times, index = event.payload
        flow = self.flows[flow_id]
        node = self.nodes[flow.source]
        packet = DataPacket(self._packet_seq, flow_id, flow.source, flow.dest, self.now,
                            self.config.packet_size_bits)
        self._packet_seq += 1
        self.metrics.on_sent(packet.packet_id)
        self.trace.record(self.now, 'emit', MessageKind.DATA.value, flow.source,
                          origin=flow.source, target=flow.dest, packet=packet.packet_id)
        if index + 1 < len(times):
            self.events.schedule(times[index + 1], EventKind.TRAFFIC_EMIT, (flow_id, times, index + 1))

        if self.protocol is not None and flow.dest not in node.active_routes:
            self._hold_for_route(node, packet)
        else:
            self.enqueue_data(node, packet)

    def _on_queue_service(self, event: Event) -> None:
        node = self.nodes[event.payload]
        node.busy = True
        while len(node.queue):
            packet = node.queue.pop()
            service_time = self._forward(node, packet)
            if service_time is not None:
                self.events.schedule(self.now + service_time, EventKind.QUEUE_SERVICE, node.node_id)
                return
        node.busy = False

    def _next_hop(self, node: VehicleNode, packet: DataPacket) -> Optional[int]:
        """Next hop from the active route or the greedy baseline; None drops the packet."""
        me = node.node_id
        if self.protocol is None:
            if packet.hops >= self.config.protocol.hop_limit:
                self._drop_packet(node, packet, 'hop_limit')
                return None
            nearby = {n: self.nodes[n].position for n in self._neighbors[me]}
            nxt = greedy_baseline_forward(me, node.position, packet.dest,
                                          self.nodes[packet.dest].position, nearby)
            if nxt is None:
                self._drop_packet(node, packet, 'local_maximum')
            return nxt

        if packet.path is None:
            route = node.active_routes.get(packet.dest)
            if route is None:
                self._hold_for_route(node, packet)
                return None
            packet.path = route.path
        nxt = packet.next_hop(me)
        if nxt is None:
            self._drop_packet(node, packet, 'no_route')
        return nxt

    def _forward(self, node: VehicleNode, packet: DataPacket) -> Optional[float]:
        """Transmits one packet to its next hop; returns the service time or None when it left the queue otherwise."""
        me = node.node_id
        nxt = self._next_hop(node, packet)
        if nxt is None:
            return None
        link = self.link_delays(me, nxt, packet.size_bits, node.last_channel) \
            if self.in_range(me, nxt) else None
        if link is None:
            self._drop_packet(node, packet, 'link_failure')
            if self.protocol is not None:
                self.protocol.report_link_failure(node, (me, nxt), packet.source, packet.dest, packet.path)
            return None
        delays, channel = link
        node.last_channel = channel
        packet.hops += 1
        packet.link_delay_sum += delays.total
        packet.trail.append(nxt)
        self.events.schedule(self.now + delays.total, EventKind.MESSAGE_DELIVERY,
                             Delivery(packet, me, nxt))
        self.trace.record(self.now, 'send', MessageKind.DATA.value, me, peer=nxt,
                          origin=packet.source, target=packet.dest, packet=packet.packet_id,
                          delay=delays.total)
        if self.protocol is not None and me != packet.source:
            self.protocol.observe_relay(me, True)
        return delays.total

    def _receive_data(self, node: VehicleNode, packet: DataPacket, sender: int) -> None:
        if node.node_id == packet.dest:
            self.metrics.on_delivered(packet.packet_id, self.now - packet.created_at, packet.link_delay_sum)
            self.trace.record(self.now, 'deliver', MessageKind.DATA.value, node.node_id, peer=sender,
                              origin=packet.source, target=packet.dest, packet=packet.packet_id,
                              path=[packet.source] + packet.trail)
            return
        if node.malicious:
            self._drop_packet(node, packet, 'malicious_discard')
            if self.protocol is not None:
                self.protocol.observe_relay(node.node_id, False)
            return
        self.enqueue_data(node, packet)

    # ------------------------------------------------------------ maintenance

    def detect_link_failures(self) -> int:
        """Checks the links of every active route; reports the first broken link of each."""
        if self.protocol is None:
            return 0
        reports = 0
        for source in self.sorted_nodes():
            for dest, entry in sorted(source.active_routes.items()):
                for u, v in entry.links:
                    if not self.link_viable(u, v):
                        if self.protocol.report_link_failure(self.nodes[u], (u, v), source.node_id,
                                                             dest, entry.path):
                            reports += 1
                        break
        return reports

    def _on_mobility_step(self, event: Event) -> None:
        cfg = self.config
        step_mobility(self.sorted_nodes(), cfg.mobility_dt, self.mobility, self.now)
        while self._moves and self._moves[0].time <= self.now:
            move = self._moves.pop(0)
            node = self.nodes[move.node_id]
            node.velocity = (float(move.vx), float(move.vy))
            node.speed = float(np.hypot(move.vx, move.vy))
        self._update_adjacency()
        self.detect_link_failures()
        horizon = self.now + cfg.mobility_dt
        if self.protocol is not None:
            for transition in self.spectrum.transitions_between(self.now, min(horizon, cfg.run_time)):
                if transition.busy:
                    self.events.schedule(transition.time, EventKind.PU_TRANSITION, transition)
        if horizon <= cfg.run_time:
            self.events.schedule(horizon, EventKind.MOBILITY_STEP)

    def _on_pu_transition(self, event: Event) -> None:
        transition: PuTransition = event.payload
        if self.detect_link_failures():
            log_debug(f"t={self.now:.3f} PU busy on channel {transition.channel} broke active links")

    def _on_metrics_sample(self, event: Event) -> None:
        sample = self.metrics.sample(self.now)
        log_debug(f"t={self.now:.1f} sent={sample.sent} delivered={sample.delivered} dropped={sample.dropped}")
        nxt = self.now + self.config.sample_interval
        if nxt <= self.config.run_time:
            self.events.schedule(nxt, EventKind.METRICS_SAMPLE)

    def _on_delivery(self, event: Event) -> None:
        """Hands a delivered control message to the protocol, or a data packet to the data plane."""
        delivery: Delivery = event.payload
        node = self.nodes[delivery.receiver]
        message = delivery.message
        if isinstance(message, DataPacket):
            self._receive_data(node, message, delivery.sender)
            return
        self.trace.record(self.now, 'receive', message.kind.value, node.node_id, peer=delivery.sender,
                          origin=message.origin, target=message.target,
                          request_id=list(message.request_id))
        if message.kind is MessageKind.RREQ:
            self.protocol.handle_rreq(node, message, delivery.sender)
        elif message.kind is MessageKind.RREP:
            self.protocol.handle_rrep(node, message, delivery.sender)
        elif message.kind is MessageKind.RERR:
            self.protocol.handle_rerr(node, message, delivery.sender)
        else:
            raise InvariantViolation(f"unexpected {message.kind.value} on the radio")

    # -------------------------------------------------------------------- run

    def _schedule_initial(self) -> None:
        cfg = self.config
        for flow_id, flow in enumerate(self.flows):
            times = emit_cbr(flow.rate, flow.start, cfg.run_time, flow.stop)
            if times:
                self.events.schedule(times[0], EventKind.TRAFFIC_EMIT, (flow_id, times, 0))
        if cfg.mobility_dt <= cfg.run_time:
            self.events.schedule(cfg.mobility_dt, EventKind.MOBILITY_STEP)
        if self.protocol is not None:
            for transition in self.spectrum.transitions_between(0.0, min(cfg.mobility_dt, cfg.run_time)):
                if transition.busy:
                    self.events.schedule(transition.time, EventKind.PU_TRANSITION, transition)
        self.events.schedule(0.0, EventKind.METRICS_SAMPLE)

    def run(self) -> MetricsReport:
        """Executes events up to run_time and returns the checked report."""
        cfg = self.config
        handlers = {
            EventKind.MESSAGE_DELIVERY: self._on_delivery,
            EventKind.MOBILITY_STEP: self._on_mobility_step,
            EventKind.PU_TRANSITION: self._on_pu_transition,
            EventKind.TRAFFIC_EMIT: self._on_traffic_emit,
            EventKind.DISCOVERY_TIMEOUT: self._on_discovery_timeout,
            EventKind.METRICS_SAMPLE: self._on_metrics_sample,
            EventKind.QUEUE_SERVICE: self._on_queue_service,
            EventKind.REPLY_DUE: self._on_reply_due,
            EventKind.ROUND_EXPIRY: self._on_round_expiry,
        }
        log_info(f"Run start: protocol={self.protocol_name} nodes={cfg.node_count} "
                 f"seed={cfg.seed} flows={len(self.flows)}")
        self._schedule_initial()
        try:
            while self.events.has_events() and self.events.peek_time() <= cfg.run_time:
                event = self.events.pop()
                handlers[event.kind](event)
        finally:
            self.trace.close()
        report = self.metrics.report(self.protocol_name, cfg.node_count, cfg.seed, cfg.run_time)
        log_info(f"Run end: protocol={self.protocol_name} nodes={cfg.node_count} seed={cfg.seed} "
                 f"sent={report.sent} delivered={report.delivered} pdr={report.pdr}")
        return report


def run(config: SimConfig, protocol: str = 'nhdf', spectrum=None,
        trace: Optional[TraceRecorder] = None) -> MetricsReport:
    """Runs one configuration; identical (config, protocol) gives an identical report."""
    return Simulator(config, protocol, spectrum=spectrum, trace=trace).run()
