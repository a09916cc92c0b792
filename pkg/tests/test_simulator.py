"""Tests for the event engine, radio model, data plane and run-level accounting."""

import json
import math

import pytest

from config.sim_config import RandomFlows, SimConfig
from core.errors import ConfigError, InvariantViolation
from services.event_queue import EventKind, EventQueue
from services.geo_mobility import Position
from services.greedy import greedy_baseline_forward
from services.metrics_collector import collect_metrics
from services.protocol import ControlMessage, MessageKind
from services.simulator import Simulator, run
from services.spectrum import ChannelSet, ScriptedSpectrum
from services.traffic import DataPacket, DropTailQueue, emit_cbr
from utils.trace import TraceRecorder, json_safe
from scenario_builders import placed_config, static_spectrum, traced_simulator


def random_config(seed, node_count=30, run_time=20.0):
    return SimConfig(node_count=node_count, area_side=1500.0, run_time=run_time,
                     heading_policy='random_waypoint', seed=seed,
                     random_flows=RandomFlows(count=3, rate=4.0)).validate()


class TestEventQueue:

    def test_time_then_insertion_order(self):
        queue = EventQueue()
        queue.schedule(2.0, EventKind.MOBILITY_STEP, 'late')
        queue.schedule(1.0, EventKind.TRAFFIC_EMIT, 'first')
        queue.schedule(1.0, EventKind.QUEUE_SERVICE, 'second')
        assert [queue.pop().payload for _ in range(3)] == ['first', 'second', 'late']
        assert queue.now == 2.0
        assert queue.pop() is None

    def test_scheduling_in_the_past(self):
        queue = EventQueue()
        queue.schedule(5.0, EventKind.MOBILITY_STEP)
        queue.pop()
        queue.schedule(5.0, EventKind.MOBILITY_STEP)
        with pytest.raises(InvariantViolation):
            queue.schedule(4.999, EventKind.MOBILITY_STEP)


class TestTraffic:

    def test_cbr_count(self):
        times = emit_cbr(10.0, 0.0, 60.0)
        assert len(times) == 600
        assert times[0] == 0.0 and times[-1] < 60.0

    def test_cbr_start_and_stop(self):
        times = emit_cbr(4.0, 5.0, 60.0, stop=10.0)
        assert times[0] == 5.0
        assert len(times) == 20
        assert emit_cbr(4.0, 70.0, 60.0) == []

    def test_cbr_rejects_non_positive_rate(self):
        with pytest.raises(ConfigError):
            emit_cbr(0.0, 0.0, 10.0)
        with pytest.raises(ConfigError):
            emit_cbr(-1.0, 0.0, 10.0)

    def test_drop_tail_fifo(self):
        queue = DropTailQueue(3)
        packets = [DataPacket(i, 0, 0, 1, 0.0, 4096) for i in range(4)]
        assert [queue.push(p) for p in packets] == [True, True, True, False]
        assert queue.overflows == 1
        assert [queue.pop().packet_id for _ in range(3)] == [0, 1, 2]
        assert queue.pop() is None

    def test_packet_next_hop(self):
        packet = DataPacket(0, 0, 0, 3, 0.0, 4096, path=(0, 1, 3))
        assert packet.next_hop(0) == 1
        assert packet.next_hop(1) == 3
        assert packet.next_hop(3) is None
        assert packet.next_hop(7) is None


class TestGreedyBaseline:

    def test_destination_neighbour_wins(self):
        nearby = {1: Position(50, 0), 2: Position(90, 0)}
        assert greedy_baseline_forward(0, Position(0, 0), 2, Position(90, 0), nearby) == 2

    def test_closest_to_destination(self):
        nearby = {1: Position(100, 50), 2: Position(300, 0), 3: Position(-100, 0)}
        assert greedy_baseline_forward(0, Position(0, 0), 9, Position(1000, 0), nearby) == 2

    def test_local_maximum(self):
        nearby = {1: Position(-100, 0)}
        assert greedy_baseline_forward(0, Position(0, 0), 9, Position(1000, 0), nearby) is None

    def test_tie_goes_to_lower_id(self):
        nearby = {4: Position(200, 100), 2: Position(200, -100)}
        assert greedy_baseline_forward(0, Position(0, 0), 9, Position(1000, 0), nearby) == 2


class TestCollectMetrics:

    def test_ratios(self):
        report = collect_metrics('nhdf', 120, 1, 150.0, sent=600, delivered=540,
                                 dropped_by_cause={'no_route': 60}, in_flight_at_end=0,
                                 delays=[0.1] * 540, packet_size_bits=4096)
        assert report.pdr == pytest.approx(0.9)
        assert report.throughput_pps == pytest.approx(3.6)
        assert report.throughput_bps == pytest.approx(3.6 * 4096)
        assert report.mean_e2e_delay == pytest.approx(0.1)

    def test_empty_run(self):
        report = collect_metrics('nhdf', 120, 1, 150.0, sent=0, delivered=0,
                                 dropped_by_cause={}, in_flight_at_end=0, delays=[],
                                 packet_size_bits=4096)
        assert report.pdr is None and report.mean_e2e_delay is None
        assert report.throughput_pps == 0.0

    def test_conservation_checked(self):
        with pytest.raises(InvariantViolation):
            collect_metrics('nhdf', 120, 1, 150.0, sent=10, delivered=5,
                            dropped_by_cause={'no_route': 1}, in_flight_at_end=0, delays=[0.1] * 5,
                            packet_size_bits=4096)


class TestRadio:

    def star(self):
        points = [(1000, 1000), (1100, 1000), (1000, 1100), (900, 1000), (1500, 1000), (1000, 1600)]
        return traced_simulator(placed_config(points))

    def test_closed_range_disc(self):
        sim = self.star()
        assert sim.neighbors(0) == [1, 2, 3, 4]
        assert sim.in_range(0, 4) and not sim.in_range(0, 5)
        assert not sim.in_range(0, 0)

    def test_broadcast_reaches_every_neighbour(self):
        sim = self.star()
        message = ControlMessage(MessageKind.RREQ, (0, 1), 0, 5, path_so_far=(0,), payload_size=512)
        assert sim.broadcast(0, message) == 4
        sends = sim.trace.select(event='send', node=0)
        assert sorted(r['peer'] for r in sends) == [1, 2, 3, 4]
        assert len(sim.events) == 4

    def test_broadcast_needs_common_channel(self):
        points = [(1000, 1000), (1100, 1000), (1000, 1100)]
        spectrum = static_spectrum({0: [1, 2], 1: [3], 2: [2, 7]})
        sim = traced_simulator(placed_config(points), spectrum=spectrum)
        message = ControlMessage(MessageKind.RREQ, (0, 1), 0, 2, path_so_far=(0,), payload_size=512)
        assert sim.broadcast(0, message) == 1
        assert not sim.unicast(0, 1, message)

    def test_ranging_without_noise(self):
        sim = self.star()
        assert sim.estimate_distance(0, 1) == pytest.approx(100.0, rel=1e-9)
        assert sim.estimate_distance(0, 4) == pytest.approx(500.0, rel=1e-9)


class TestRuns:

    def test_zero_flows(self):
        report = run(placed_config([(0, 0), (100, 0)]), 'nhdf', static_spectrum())
        assert report.sent == 0
        assert report.pdr is None and report.mean_e2e_delay is None

    @pytest.mark.parametrize('protocol', ['nhdf', 'greedy_baseline'])
    def test_two_adjacent_nodes_deliver_everything(self, protocol):
        config = placed_config([(0, 0), (100, 0)], flows=[(0, 1)])
        report = run(config, protocol, static_spectrum())
        assert report.sent == 40
        assert report.delivered == 40 and report.pdr == 1.0
        assert report.mean_e2e_delay > 0

    def test_greedy_local_maximum(self):
        config = placed_config([(0, 0), (3000, 3000)], flows=[(0, 1)])
        report = run(config, 'greedy_baseline', static_spectrum())
        assert report.delivered == 0
        assert report.drops('local_maximum') == report.sent

    def test_unknown_protocol(self):
        with pytest.raises(ConfigError):
            Simulator(placed_config([(0, 0), (100, 0)]), 'aodv')

    @pytest.mark.parametrize('protocol', ['nhdf', 'greedy_baseline'])
    @pytest.mark.parametrize('seed', [1, 2, 3])
    def test_packet_conservation(self, protocol, seed):
        report = run(random_config(seed), protocol)
        assert report.sent > 0
        assert report.sent == report.delivered + report.dropped + report.in_flight_at_end
        assert report.dropped == sum(count for _, count in report.dropped_by_cause)

    def test_same_seed_same_trace(self):
        traces = []
        for _ in range(2):
            trace = TraceRecorder(enabled=True)
            run(random_config(7), 'nhdf', trace=trace)
            traces.append(trace.lines())
        assert traces[0] == traces[1]
        assert traces[0]

    def test_different_seed_different_trace(self):
        traces = []
        for seed in (7, 8):
            trace = TraceRecorder(enabled=True)
            run(random_config(seed), 'nhdf', trace=trace)
            traces.append(trace.lines())
        assert traces[0] != traces[1]

    def test_trace_file_matches_memory(self, tmp_path):
        path = tmp_path / 'trace.jsonl'
        trace = TraceRecorder(path=path)
        run(random_config(4, run_time=5.0), 'nhdf', trace=trace)
        assert path.read_text(encoding='utf-8').splitlines() == trace.lines()

    def test_trace_file_is_strict_json(self, tmp_path):
        def reject(constant):
            raise ValueError(f"non-standard JSON constant {constant}")

        path = tmp_path / 'trace.jsonl'
        config = placed_config([(0, 0), (100, 0)], flows=[(0, 1)], run_time=3.0, num_channels=100)
        run(config, 'nhdf', static_spectrum(channels=100), trace=TraceRecorder(path=path))
        records = [json.loads(line, parse_constant=reject)
                   for line in path.read_text(encoding='utf-8').splitlines()]
        stored = [r for r in records if r['event'] == 'store']
        assert stored and stored[0]['weight'] == 'inf'
        assert math.isfinite(stored[0]['log_weight'])

    def test_non_finite_values_become_markers(self):
        assert json_safe({'w': math.inf, 'l': [-math.inf, math.nan, 2.5], 'n': 3}) == \
            {'w': 'inf', 'l': ['-inf', 'nan', 2.5], 'n': 3}
        trace = TraceRecorder(enabled=True)
        trace.record(1.0, 'select', 'ROUTE', 0, weight=math.inf, log_weight=-math.inf)
        assert json.loads(trace.lines()[0])['log_weight'] == '-inf'

    def test_data_never_faster_than_its_links(self):
        sim = traced_simulator(placed_config([(0, 0), (400, 0), (800, 0)], flows=[(0, 2)]))
        report = sim.run()
        assert report.delivered > 0
        for record in sim.trace.select(event='deliver'):
            assert record['path'] == [0, 1, 2]


class TestLinkFailures:

    def test_relay_leaving_range_sends_one_error(self):
        config = placed_config([(0, 0), (420, 0), (800, 0)], flows=[(0, 2)],
                               velocities={1: (-4.0, 0.0)}, run_time=40.0)
        sim = traced_simulator(config)
        report = sim.run()
        errors = sim.trace.select(event='originate', kind='RERR')
        assert len(errors) == 1
        assert errors[0]['t'] == pytest.approx(30.5) and errors[0]['node'] == 1
        assert report.route_errors == 1
        maintained = sim.trace.select(event='maintain', node=0)
        assert maintained and maintained[0]['link'] == [1, 2]
        assert all(r['t'] <= 30.5 for r in sim.trace.select(event='deliver'))

    def test_primary_user_on_only_channel(self):
        sets = {n: ChannelSet.of([5]) for n in range(3)}
        spectrum = ScriptedSpectrum(sets, changes=[(10.2, 1, ChannelSet.of([]))], num_channels=10)
        config = placed_config([(0, 0), (400, 0), (800, 0)], flows=[(0, 2)], run_time=11.0)
        sim = traced_simulator(config, spectrum=spectrum)
        sim.run()
        maintained = sim.trace.select(event='maintain', node=0)
        assert len(maintained) == 1
        assert maintained[0]['t'] == pytest.approx(10.2)
        assert maintained[0]['link'] == [0, 1]
        assert 2 not in sim.nodes[0].active_routes
        assert all(r['t'] < 10.2 for r in sim.trace.select(event='deliver'))

    def test_queue_overflow_while_waiting_for_route(self):
        config = placed_config([(0, 0), (3000, 3000)], flows=[(0, 1)], rate=100.0,
                               run_time=1.5, queue_capacity=5)
        report = run(config, 'nhdf', static_spectrum())
        assert report.drops('queue_overflow') == report.sent - 5
        assert report.in_flight_at_end == 5
