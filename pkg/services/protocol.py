"""
NHDF reactive routing: route discovery, route selection and maintenance.

The module holds the protocol data types (control messages, route tables,
reliability bookkeeping), the pure operations on them, and NhdfProtocol, the
per-node state machine the simulator drives. Link scores are computed on the
reply pass, when the concrete reverse link, its common channels and the delay
accumulated towards the destination are known.
"""

import math
from collections import deque
from dataclasses import dataclass, replace
from enum import Enum
from typing import (TYPE_CHECKING, Deque, Dict, Iterable, List, Mapping,
                    Optional, Sequence, Set, Tuple)

from config.constants import (
    DEFAULT_QUERY_THRESHOLD,
    DEFAULT_SUSPICION_DROP_THRESHOLD,
    DEFAULT_SUSPICION_MIN_SAMPLES,
    DEFAULT_SUSPICION_WINDOW,
)
from core.errors import (
    DegenerateMotionError,
    InvalidInputError,
    InvariantViolation,
    NoRouteError,
    SelfRouteError,
)
from services.geo_mobility import TimedFix, displacement, estimate_speed, heading_angle
from services.metric import (
    INFINITE_RF,
    MetricInputs,
    Nhdf,
    Reliability,
    evaluate_link,
    is_infinite_rf,
    path_log_weight,
    path_weight,
    reliability,
)
from services.spectrum import common_idle_count, operating_channel, switching_delay
from utils.logger import log_debug, log_warning

if TYPE_CHECKING:
    from services.simulator import DiscoveryRound, Simulator
    from services.vehicle import VehicleNode

RequestId = Tuple[int, int]
Link = Tuple[int, int]


class MessageKind(Enum):
    RREQ = "RREQ"
    RREP = "RREP"
    RERR = "RERR"
    SQN_QUERY = "SQN_QUERY"
    SQN_REPORT = "SQN_REPORT"
    DATA = "DATA"


class DiscoveryScope(Enum):
    """How far duplicate suppression reaches during a flood."""
    FIRST_COPY = "first_copy"
    ALL_PATHS = "all_paths"


@dataclass(frozen=True)
class ControlMessage:
    """Discovery and maintenance payload; replaced, never mutated, hop to hop."""

    kind: MessageKind
    request_id: RequestId
    origin: int
    target: int
    path_so_far: Tuple[int, ...] = ()
    accumulated_nhdf: float = 0.0
    accumulated_rf: Reliability = 1.0
    accumulated_delay: float = 0.0
    dest_fix: Optional[TimedFix] = None
    payload_size: float = 0.0
    link_values: Tuple[Nhdf, ...] = ()
    hop_fix: Optional[TimedFix] = None
    channel: Optional[int] = None
    failed_link: Optional[Link] = None
    malicious_node: Optional[int] = None

    def __post_init__(self):
        if len(set(self.path_so_far)) != len(self.path_so_far):
            raise InvariantViolation(f"{self.kind.value} path repeats a node: {self.path_so_far}")


@dataclass(frozen=True)
class RouteEntry:
    """One discovered path with its cumulative NHDF."""

    weight: float
    rf: Reliability
    path: Tuple[int, ...]
    log_weight: float = -math.inf
    excluded: bool = False
    discovered_at: float = 0.0
    link_values: Tuple[Nhdf, ...] = ()

    @classmethod
    def from_links(cls, path: Sequence[int], link_values: Sequence[Nhdf], rf: Reliability,
                   discovered_at: float = 0.0) -> 'RouteEntry':
        values = tuple(link_values)
        excluded = is_infinite_rf(rf) or any(v.excluded for v in values)
        return cls(weight=path_weight(values), rf=rf, path=tuple(path),
                   log_weight=path_log_weight(values), excluded=excluded,
                   discovered_at=discovered_at, link_values=values)

    @property
    def links(self) -> List[Link]:
        return list(zip(self.path, self.path[1:]))

    def uses_link(self, link: Link) -> bool:
        a, b = link
        return any((u, v) in ((a, b), (b, a)) for u, v in self.links)


class RouteTable:
    """Routes from one source to one destination, in discovery order."""

    def __init__(self, source: int, dest: int, request_id: Optional[RequestId] = None):
        self.source = source
        self.dest = dest
        self.request_id = request_id
        self.entries: List[RouteEntry] = []

    @property
    def L_s(self) -> int:
        return len(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def add(self, entry: RouteEntry) -> None:
        """
        Appends a discovered route.

        Raises:
            InvariantViolation: the path loops, has the wrong ends or a negative weight
        """
        path = entry.path
        if len(set(path)) != len(path):
            raise InvariantViolation(f"route {path} is not loop-free")
        if not path or path[0] != self.source or path[-1] != self.dest:
            raise InvariantViolation(f"route {path} does not join {self.source} to {self.dest}")
        if entry.weight < 0:
            raise InvariantViolation(f"route {path} has negative weight {entry.weight}")
        self.entries.append(entry)

    def remove_link(self, link: Link) -> int:
        """Drops entries using the link in either direction; returns how many."""
        before = len(self.entries)
        self.entries = [e for e in self.entries if not e.uses_link(link)]
        return before - len(self.entries)

    def remove_node(self, node_id: int) -> int:
        """Drops entries through the node; returns how many."""
        before = len(self.entries)
        self.entries = [e for e in self.entries if node_id not in e.path]
        return before - len(self.entries)

    def contains_link(self, link: Link) -> bool:
        return any(e.uses_link(link) for e in self.entries)


def _heavier(entry: RouteEntry, best: RouteEntry) -> bool:
    if math.isfinite(entry.weight) and math.isfinite(best.weight):
        return entry.weight > best.weight
    return entry.log_weight > best.log_weight


def select_route(table: RouteTable, excluded_nodes: Iterable[int] = ()) -> RouteEntry:
    """
    Maximum-weight entry; the earliest discovered wins a tie.

    Entries holding an excluded link or a node in `excluded_nodes` are never
    selected. Finite weights are compared as they are; the log weights only
    decide between entries whose sum left binary64 range.

    Raises:
        NoRouteError: no selectable entry
    """
    banned = set(excluded_nodes)
    best: Optional[RouteEntry] = None
    for entry in table.entries:
        if entry.excluded or banned.intersection(entry.path):
            continue
        if best is None or _heavier(entry, best):
            best = entry
    if best is None:
        raise NoRouteError(f"no route from {table.source} to {table.dest}")
    return best


class ReliabilityState:
    """Per-neighbour report counts and frozen (malicious) verdicts of one node."""

    def __init__(self):
        self.report_counts: Dict[int, int] = {}
        self.frozen: Set[int] = set()
        self.query_ledger: Dict[int, Tuple[int, int]] = {}

    def rn(self, neighbor: int) -> int:
        return self.report_counts.get(neighbor, 0)

    def rf(self, neighbor: int) -> Reliability:
        """e^RN for the neighbour, or the infinite marker once it is frozen."""
        if neighbor in self.frozen:
            return INFINITE_RF
        return reliability(self.rn(neighbor))

    def is_frozen(self, neighbor: int) -> bool:
        return neighbor in self.frozen

    def add_reports(self, neighbor: int, count: int) -> None:
        if count < 0:
            raise InvalidInputError("report count must be non-negative")
        if count:
            self.report_counts[neighbor] = self.rn(neighbor) + count

    def freeze(self, neighbor: int) -> None:
        self.frozen.add(neighbor)

    def record_round(self, subject: int, votes: int, queried: int) -> None:
        prev_votes, prev_queried = self.query_ledger.get(subject, (0, 0))
        self.query_ledger[subject] = (prev_votes + votes, prev_queried + queried)


class ForwardingWindow:
    """Sliding record of whether each overheard neighbour forwarded what it received."""

    def __init__(self, size: int = DEFAULT_SUSPICION_WINDOW):
        self.size = size
        self._windows: Dict[int, Deque[bool]] = {}

    def observe(self, neighbor: int, forwarded: bool) -> None:
        window = self._windows.get(neighbor)
        if window is None:
            window = self._windows[neighbor] = deque(maxlen=self.size)
        window.append(forwarded)

    def samples(self, neighbor: int) -> int:
        return len(self._windows.get(neighbor, ()))

    def drop_fraction(self, neighbor: int) -> float:
        """Share of the windowed observations where the neighbour dropped the packet."""
        window = self._windows.get(neighbor)
        if not window:
            return 0.0
        return sum(1 for forwarded in window if not forwarded) / len(window)

    def reset(self, neighbor: int) -> None:
        self._windows.pop(neighbor, None)


@dataclass(frozen=True)
class SuspicionVerdict:
    subject: int
    queried: Tuple[int, ...]
    suspect_votes: int
    frozen: bool


def run_suspicion_round(subject: int, queriers: Mapping[int, ReliabilityState],
                        suspects: Iterable[int],
                        q_t: float = DEFAULT_QUERY_THRESHOLD) -> SuspicionVerdict:
    """
    One suspect-or-query round about `subject`.

    Every suspect report raises the subject's report count by one at each
    querier. When the suspect votes strictly exceed q_t of the queried
    neighbours, every querier freezes the subject's RF to infinity.
    """
    queried = tuple(sorted(queriers))
    votes = len(set(suspects).intersection(queried))
    frozen = bool(queried) and votes / len(queried) > q_t
    for querier_id in queried:
        state = queriers[querier_id]
        state.record_round(subject, votes, len(queried))
        if frozen:
            state.freeze(subject)
        else:
            state.add_reports(subject, votes)
    return SuspicionVerdict(subject, queried, votes, frozen)


def remove_failed_link(table: RouteTable, failed_link: Link,
                       active: Optional[RouteEntry]) -> Tuple[int, bool]:
    """Deletes every entry using the link; reports whether the active route was hit."""
    removed = table.remove_link(failed_link)
    return removed, active is not None and active.uses_link(failed_link)


class NhdfProtocol:
    """Route discovery, selection and maintenance driven by the simulator's events."""

    name = "nhdf"

    def __init__(self, sim: 'Simulator'):
        self.sim = sim
        self.settings = sim.config.protocol
        self.scope = DiscoveryScope(self.settings.discovery_scope)

    # ------------------------------------------------------------------ discovery

    def originate_discovery(self, source: 'VehicleNode', dest: int) -> RequestId:
        """Floods a fresh RREQ and opens the reply collection window."""
        if source.node_id == dest:
            raise SelfRouteError(f"node {dest} asked for a route to itself")
        sim = self.sim
        request_id = source.next_request_id()
        source.discovering[dest] = request_id
        source.route_tables[dest] = RouteTable(source.node_id, dest, request_id)
        source.active_routes.pop(dest, None)
        source.seen_requests.add(request_id)
        discovery = sim.open_round(request_id, source.node_id, dest)
        message = ControlMessage(
            kind=MessageKind.RREQ, request_id=request_id, origin=source.node_id, target=dest,
            path_so_far=(source.node_id,), payload_size=sim.config.control_size_bits)
        sim.metrics.discoveries += 1
        sim.trace.record(sim.now, 'originate', MessageKind.RREQ.value, source.node_id,
                         origin=source.node_id, target=dest, request_id=list(request_id))
        log_debug(f"t={sim.now:.3f} node {source.node_id} starts discovery {request_id} for {dest}")
        sim.broadcast(source.node_id, message, discovery)
        sim.schedule_discovery_timeout(source.node_id, dest, request_id)
        return request_id

    def _duplicate_key(self, message: ControlMessage) -> tuple:
        if self.scope is DiscoveryScope.ALL_PATHS:
            return (message.request_id, message.path_so_far)
        return message.request_id

    def handle_rreq(self, node: 'VehicleNode', message: ControlMessage, sender: int) -> str:
        """Answers, forwards or drops one RREQ copy; returns the action taken."""
        sim = self.sim
        me = node.node_id
        discovery = sim.rounds.get(message.request_id)

        if me == message.origin:
            return self._drop(node, message, sender, 'own_request')
        if node.reliability.is_frozen(sender):
            return self._drop(node, message, sender, 'untrusted_sender')
        if me in message.path_so_far:
            return self._drop(node, message, sender, 'loop')
        if discovery is None:
            return self._drop(node, message, sender, 'stale')

        path = message.path_so_far + (me,)

        if me == message.target:
            reply_key = (message.request_id, message.path_so_far)
            if reply_key in node.seen_requests:
                return self._drop(node, message, sender, 'duplicate')
            node.seen_requests.add(reply_key)
            node.remember_receipt(message.request_id, path, sim.now)
            reply = ControlMessage(
                kind=MessageKind.RREP, request_id=message.request_id, origin=message.origin,
                target=message.target, path_so_far=path, payload_size=sim.config.control_size_bits)
            sim.schedule_reply(me, reply, discovery)
            return 'reply'

        key = self._duplicate_key(message)
        if key in node.seen_requests:
            return self._drop(node, message, sender, 'duplicate')
        node.seen_requests.add(key)

        if len(path) > self.settings.hop_limit:
            return self._drop(node, message, sender, 'hop_limit')
        node.remember_receipt(message.request_id, path, sim.now)

        inbound = operating_channel(sim.idle_set(sender, discovery), sim.idle_set(me, discovery))
        forwarded = replace(message, path_so_far=path, channel=inbound)
        target = message.target
        # all_paths floods on so the destination hears every simple path
        if self.scope is DiscoveryScope.FIRST_COPY and sim.in_range(me, target) \
                and not node.reliability.is_frozen(target) \
                and common_idle_count(sim.idle_set(me, discovery), sim.idle_set(target, discovery)) > 0:
            sim.unicast(me, target, forwarded, discovery)
            return 'to_destination'
        sim.broadcast(me, forwarded, discovery)
        return 'rebroadcast'

    def score_reverse_link(self, node: 'VehicleNode', message: ControlMessage, sender: int,
                           discovery: 'DiscoveryRound'):
        """Scores link (node -> sender) of the path carried by an RREP."""
        sim = self.sim
        me = node.node_id
        path = message.path_so_far
        idx = path.index(me)
        metric = sim.config.metric

        mine = sim.idle_set(me, discovery)
        theirs = sim.idle_set(sender, discovery)
        c_n = common_idle_count(mine, theirs)
        outbound = operating_channel(mine, theirs)
        if idx > 0 and outbound is not None:
            inbound = operating_channel(sim.idle_set(path[idx - 1], discovery), mine)
            previous = inbound if inbound is not None else outbound
        else:
            previous = outbound
        switching = 0.0 if outbound is None else switching_delay(
            previous, outbound, sim.config.spectrum.switch_step_delay)

        d = sim.estimate_distance(me, sender)
        fix = message.hop_fix
        dest_fix = message.dest_fix
        speed = estimate_speed(fix) if fix is not None else 0.0
        theta = metric.floors.theta
        if fix is not None and dest_fix is not None:
            try:
                theta = max(heading_angle(fix.receive_pos, fix.send_pos,
                                          dest_fix.receive_pos, dest_fix.send_pos), theta)
            except DegenerateMotionError:
                pass

        inputs = MetricInputs(
            transmission_range_phi=sim.config.tx_range,
            displacement_tau=displacement(d, theta),
            cumulative_path_delay=message.accumulated_delay,
            speed_s=speed,
            packet_size_S=sim.config.packet_size_bits,
            neighbor_count_V=len(sim.neighbors(me)),
            data_rate_RT=sim.config.data_rate,
            common_channels_Cn=c_n,
            reliability_RF=node.reliability.rf(sender),
            collision_prob_bc=metric.collision_prob,
            window_z=metric.backoff_window,
            switching=switching,
        )
        return evaluate_link(inputs, metric.floors)

    def handle_rrep(self, node: 'VehicleNode', message: ControlMessage, sender: int) -> str:
        """Scores the reverse link, then forwards the RREP or stores the finished route."""
        sim = self.sim
        me = node.node_id
        path = message.path_so_far
        if me not in path or path.index(me) + 1 >= len(path) or path[path.index(me) + 1] != sender:
            return self._drop(node, message, sender, 'off_path')
        discovery = sim.rounds.get(message.request_id)
        if discovery is None:
            return self._drop(node, message, sender, 'stale')

        score = self.score_reverse_link(node, message, sender, discovery)
        link_rf = node.reliability.rf(sender)
        if is_infinite_rf(message.accumulated_rf) or is_infinite_rf(link_rf):
            rf = INFINITE_RF
        else:
            rf = max(message.accumulated_rf, link_rf)
        link_values = message.link_values + (score.nhdf,)
        updated = replace(message, link_values=link_values, accumulated_rf=rf,
                          accumulated_delay=message.accumulated_delay + score.delays.total,
                          accumulated_nhdf=path_weight(link_values), hop_fix=None)

        if me != message.origin:
            sim.schedule_reply(me, updated, discovery)
            return 'forward'

        table = node.route_tables.get(message.target)
        if table is None or table.request_id != message.request_id:
            return self._drop(node, message, sender, 'stale')
        entry = RouteEntry.from_links(path, tuple(reversed(link_values)), rf, discovered_at=sim.now)
        table.add(entry)
        sim.trace.record(sim.now, 'store', MessageKind.RREP.value, me, peer=sender,
                         origin=message.origin, target=message.target,
                         request_id=list(message.request_id), path=list(path),
                         weight=entry.weight, log_weight=entry.log_weight, excluded=entry.excluded)
        # held packets leave on the first reply; the window close still selects over all of them
        if message.target not in node.active_routes:
            self.activate_best(node, message.target,
                               provisional=message.target in node.discovering)
        return 'store'

    def on_discovery_timeout(self, node: 'VehicleNode', dest: int, request_id: RequestId) -> None:
        """Closes the collection window and selects a route."""
        if node.discovering.get(dest) != request_id:
            return
        del node.discovering[dest]
        if not self.activate_best(node, dest):
            log_warning(f"node {node.node_id}: discovery {request_id} for {dest} found no route")
            self.sim.drop_pending(node, dest, 'no_route')

    def activate_best(self, node: 'VehicleNode', dest: int, provisional: bool = False) -> bool:
        """
        Makes the best selectable stored route active and releases held packets.

        A provisional activation happens while the collection window is still
        open; it is traced as 'provisional' rather than 'select' and is
        replaced by the selection made when the window closes.
        """
        table = node.route_tables.get(dest)
        if table is None:
            return False
        try:
            entry = select_route(table, node.reliability.frozen)
        except NoRouteError:
            node.active_routes.pop(dest, None)
            return False
        node.active_routes[dest] = entry
        self.sim.trace.record(self.sim.now, 'provisional' if provisional else 'select', 'ROUTE',
                              node.node_id, target=dest, path=list(entry.path),
                              weight=entry.weight, log_weight=entry.log_weight)
        log_debug(f"t={self.sim.now:.3f} node {node.node_id} routes to {dest} via {list(entry.path)}")
        self.sim.release_pending(node, dest)
        return True

    # ---------------------------------------------------------------- maintenance

    def report_link_failure(self, predecessor: 'VehicleNode', failed_link: Link, source: int,
                            dest: int, path: Tuple[int, ...],
                            malicious: Optional[int] = None) -> bool:
        """Sends one RERR per (route, link) from the failure's upstream node to the source."""
        key = (source, dest, path, failed_link)
        if key in predecessor.reported_failures:
            return False
        predecessor.reported_failures.add(key)
        sim = self.sim
        if predecessor.node_id == source:
            self.handle_link_failure(predecessor, failed_link, dest, malicious)
            return True
        idx = path.index(predecessor.node_id)
        prefix = tuple(reversed(path[:idx + 1]))
        message = ControlMessage(
            kind=MessageKind.RERR, request_id=(source, -1), origin=predecessor.node_id,
            target=source, path_so_far=prefix, payload_size=sim.config.control_size_bits,
            failed_link=failed_link, malicious_node=malicious)
        sim.metrics.route_errors += 1
        sim.trace.record(sim.now, 'originate', MessageKind.RERR.value, predecessor.node_id,
                         target=source, link=list(failed_link))
        self.forward_rerr(predecessor, message)
        return True

    def forward_rerr(self, node: 'VehicleNode', message: ControlMessage) -> None:
        """Unicasts a RERR one hop further along its reversed path; drops it when that link is gone."""
        hops = message.path_so_far
        idx = hops.index(node.node_id)
        next_hop = hops[idx + 1]
        if not self.sim.unicast(node.node_id, next_hop, message, None):
            self._drop(node, message, next_hop, 'link_failure')

    def handle_rerr(self, node: 'VehicleNode', message: ControlMessage, sender: int) -> str:
        """
        Relays a RERR towards the source, or runs maintenance when this node is the source.

        Returns 'handled', 'forward' or 'drop'.
        """
        if node.node_id == message.target:
            dest = self._rerr_destination(node, message)
            if dest is not None:
                self.handle_link_failure(node, message.failed_link, dest, message.malicious_node)
            return 'handled'
        if node.node_id not in message.path_so_far:
            return self._drop(node, message, sender, 'off_path')
        self.forward_rerr(node, message)
        return 'forward'

    @staticmethod
    def _rerr_destination(node: 'VehicleNode', message: ControlMessage) -> Optional[int]:
        """Destination whose active route, or failing that stored table, holds the failed link."""
        for dest, entry in sorted(node.active_routes.items()):
            if entry.uses_link(message.failed_link):
                return dest
        for dest, table in sorted(node.route_tables.items()):
            if table.contains_link(message.failed_link):
                return dest
        return None

    def handle_link_failure(self, source: 'VehicleNode', failed_link: Link, dest: int,
                            malicious: Optional[int] = None) -> Optional[RouteEntry]:
        """
        Deletes every stored path over the failed link and reselects.

        A fresh discovery starts only when no stored path survives.
        """
        sim = self.sim
        table = source.route_tables.get(dest)
        active = source.active_routes.get(dest)
        if table is None:
            return None
        removed, hit = remove_failed_link(table, failed_link, active)
        if malicious is not None:
            source.reliability.freeze(malicious)
            removed += table.remove_node(malicious)
            hit = hit or (active is not None and malicious in active.path)
        sim.trace.record(sim.now, 'maintain', MessageKind.RERR.value, source.node_id,
                         target=dest, link=list(failed_link), removed=removed)
        if not hit:
            return active
        source.active_routes.pop(dest, None)
        if self.activate_best(source, dest):
            return source.active_routes[dest]
        if dest not in source.discovering:
            self.originate_discovery(source, dest)
        return None

    # ------------------------------------------------------------------ suspicion

    def observe_relay(self, relay: int, forwarded: bool) -> None:
        """Neighbours of a relay overhear whether it forwarded a data packet."""
        sim = self.sim
        for observer_id in sim.neighbors(relay):
            observer = sim.nodes[observer_id]
            if observer.reliability.is_frozen(relay):
                continue
            observer.observations.observe(relay, forwarded)
        for observer_id in sim.neighbors(relay):
            observer = sim.nodes[observer_id]
            if observer.reliability.is_frozen(relay):
                continue
            window = observer.observations
            if window.samples(relay) >= self.settings.suspicion_min_samples and \
                    window.drop_fraction(relay) > self.settings.suspicion_drop_threshold:
                window.reset(relay)
                self.suspect(observer, relay)
                break

    def suspect(self, initiator: 'VehicleNode', subject: int) -> SuspicionVerdict:
        """Queries the subject's neighbours and applies their votes."""
        sim = self.sim
        queriers = {nid: sim.nodes[nid].reliability for nid in sim.neighbors(subject)}
        queriers.setdefault(initiator.node_id, initiator.reliability)
        suspects = []
        for querier_id in sorted(queriers):
            sim.trace.record(sim.now, 'send', MessageKind.SQN_QUERY.value, initiator.node_id,
                             peer=querier_id, target=subject)
            observer = sim.nodes[querier_id].observations
            vote = querier_id == initiator.node_id or (
                observer.samples(subject) > 0 and
                observer.drop_fraction(subject) > self.settings.suspicion_drop_threshold)
            if vote:
                suspects.append(querier_id)
            sim.trace.record(sim.now, 'send', MessageKind.SQN_REPORT.value, querier_id,
                             peer=initiator.node_id, target=subject, suspect=vote)
        verdict = run_suspicion_round(subject, queriers, suspects, self.settings.query_threshold)
        sim.metrics.suspicion_rounds += 1
        log_debug(f"t={sim.now:.3f} suspicion round on {subject}: "
                  f"{verdict.suspect_votes}/{len(verdict.queried)} suspect, frozen={verdict.frozen}")
        if verdict.frozen:
            sim.on_node_frozen(subject, verdict.queried)
        return verdict

    def exclude_frozen(self, subject: int, participants: Iterable[int]) -> None:
        """
        Breaks every active route whose hop before the subject took part in the freeze.

        Routes the subject originates or terminates have no such hop and are
        left alone.
        """
        sim = self.sim
        participants = set(participants)
        for source in sim.sorted_nodes():
            for dest, entry in sorted(source.active_routes.items()):
                if subject not in entry.path[1:-1]:
                    continue
                idx = entry.path.index(subject)
                upstream = entry.path[idx - 1]
                if upstream in participants:
                    self.report_link_failure(sim.nodes[upstream], (upstream, subject),
                                             source.node_id, dest, entry.path, malicious=subject)

    # -------------------------------------------------------------------- helpers

    def _drop(self, node: 'VehicleNode', message: ControlMessage, peer: int, cause: str) -> str:
        self.sim.trace.record(self.sim.now, 'drop', message.kind.value, node.node_id, peer=peer,
                              origin=message.origin, target=message.target,
                              request_id=list(message.request_id), cause=cause)
        return 'drop'


def enumerate_simple_paths(adjacency: Mapping[int, Iterable[int]], source: int, dest: int,
                           max_hops: Optional[int] = None) -> List[Tuple[int, ...]]:
    """All loop-free paths from source to dest, depth first in ascending neighbour order."""
    paths: List[Tuple[int, ...]] = []
    stack = [(source, (source,))]
    while stack:
        node, path = stack.pop()
        if node == dest:
            paths.append(path)
            continue
        if max_hops is not None and len(path) - 1 >= max_hops:
            continue
        for neighbor in sorted(adjacency.get(node, ()), reverse=True):
            if neighbor not in path:
                stack.append((neighbor, path + (neighbor,)))
    return paths
