"""Tests for route tables, selection, suspicion rounds and NHDF discovery/maintenance."""

import math
from collections import deque
from dataclasses import replace

import numpy as np
import pytest

from config.sim_config import ProtocolSettings
from core.errors import InvariantViolation, NoRouteError, SelfRouteError
from services.geo_mobility import Position, TimedFix
from services.metric import INFINITE_RF, MetricInputs, Nhdf, evaluate_link, link_nhdf, path_weight
from services.protocol import (
    ControlMessage,
    MessageKind,
    ReliabilityState,
    RouteEntry,
    RouteTable,
    enumerate_simple_paths,
    run_suspicion_round,
    select_route,
)
from services.spectrum import ChannelSet, ScriptedSpectrum
from scenario_builders import placed_config, static_spectrum, traced_simulator


def entry(path, *values):
    return RouteEntry.from_links(path, [Nhdf.of(v) for v in values], 1.0)


class TestRouteTable:

    def test_first_maximum_wins(self):
        table = RouteTable(0, 9)
        for path, weight in (((0, 1, 9), 5.0), ((0, 2, 9), 9.0), ((0, 3, 9), 9.0)):
            table.add(entry(path, weight))
        assert select_route(table).path == (0, 2, 9)
        assert table.L_s == 3

    def test_single_entry(self):
        table = RouteTable(0, 4)
        table.add(entry((0, 4), 0.5))
        assert select_route(table).path == (0, 4)

    def test_empty_table(self):
        with pytest.raises(NoRouteError):
            select_route(RouteTable(0, 4))

    def test_brute_force_maximum(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            table = RouteTable(0, 99)
            weights = rng.integers(0, 20, size=rng.integers(1, 12)).astype(float)
            for i, w in enumerate(weights):
                table.add(entry((0, i + 1, 99), float(w)))
            chosen = select_route(table)
            assert chosen.weight == max(weights)
            assert chosen.path == (0, int(np.argmax(weights)) + 1, 99)

    def test_argmax_invariant_under_scaling(self):
        rng = np.random.default_rng(2)
        for _ in range(1000):
            count = int(rng.integers(1, 8))
            raw = [rng.uniform(0.1, 1e6, size=rng.integers(1, 5)) for _ in range(count)]
            k = float(10 ** rng.uniform(-6, 6))
            plain, scaled = RouteTable(0, 99), RouteTable(0, 99)
            for i, values in enumerate(raw):
                links = [Nhdf.of(float(v)) for v in values]
                plain.add(RouteEntry.from_links((0, i + 1, 99), links, 1.0))
                scaled.add(RouteEntry.from_links((0, i + 1, 99), [l.scaled(k) for l in links], 1.0))
            assert select_route(plain).path == select_route(scaled).path

    def test_excluded_entries_never_selected(self):
        table = RouteTable(0, 3)
        table.add(RouteEntry.from_links((0, 1, 3), [Nhdf.of(1e9), Nhdf.excluded_link()], 1.0))
        table.add(entry((0, 2, 3), 1.0, 1.0))
        chosen = select_route(table)
        assert chosen.path == (0, 2, 3)
        assert table.entries[0].weight == 0.0

    def test_frozen_node_skipped(self):
        table = RouteTable(0, 3)
        table.add(entry((0, 1, 3), 100.0))
        table.add(entry((0, 2, 3), 1.0))
        assert select_route(table, excluded_nodes={1}).path == (0, 2, 3)

    def test_loop_rejected(self):
        table = RouteTable(0, 3)
        with pytest.raises(InvariantViolation):
            table.add(entry((0, 1, 0, 3), 1.0))
        with pytest.raises(InvariantViolation):
            ControlMessage(MessageKind.RREQ, (0, 1), 0, 3, path_so_far=(0, 2, 0))

    def test_remove_link_both_directions(self):
        table = RouteTable(0, 3)
        table.add(entry((0, 1, 3), 1.0))
        table.add(entry((0, 2, 3), 1.0))
        assert table.remove_link((3, 1)) == 1
        assert not table.contains_link((1, 3))
        assert table.remove_link((5, 6)) == 0
        assert [e.path for e in table.entries] == [(0, 2, 3)]

    def test_adjacent_finite_weights_ordered_exactly(self):
        heavier = float(np.nextafter(np.nextafter(1e6, np.inf), np.inf))
        table = RouteTable(0, 9)
        table.add(entry((0, 1, 9), 1e6))
        table.add(entry((0, 2, 9), heavier))
        assert select_route(table).path == (0, 2, 9)

    def test_overflowed_weights_ordered_by_log(self):
        table = RouteTable(0, 9)
        table.add(RouteEntry.from_links((0, 1, 9), [link_nhdf(1e8, 1e-3, 100, 1.0)], 1.0))
        table.add(RouteEntry.from_links((0, 2, 9), [link_nhdf(1e8, 1e-3, 101, 1.0)], 1.0))
        table.add(entry((0, 3, 9), 1e300))
        assert all(e.weight == math.inf for e in table.entries[:2])
        assert select_route(table).path == (0, 2, 9)


class TestSuspicionRound:

    def test_no_reports(self):
        states = {i: ReliabilityState() for i in (1, 2, 3)}
        verdict = run_suspicion_round(0, states, [])
        assert not verdict.frozen
        assert all(s.rn(0) == 0 and s.rf(0) == 1.0 for s in states.values())

    def test_majority_freezes_everyone(self):
        states = {i: ReliabilityState() for i in (1, 2, 3)}
        verdict = run_suspicion_round(0, states, [1, 2])
        assert verdict.frozen and verdict.suspect_votes == 2
        assert all(s.rf(0) is INFINITE_RF for s in states.values())

    def test_minority_increments_report_count(self):
        states = {i: ReliabilityState() for i in (1, 2, 3)}
        verdict = run_suspicion_round(0, states, [3])
        assert not verdict.frozen
        for s in states.values():
            assert s.rn(0) == 1
            assert s.rf(0) == pytest.approx(math.e)
            assert s.query_ledger[0] == (1, 3)

    def test_exactly_half_does_not_freeze(self):
        states = {i: ReliabilityState() for i in (1, 2)}
        assert not run_suspicion_round(0, states, [1]).frozen

    def test_frozen_is_permanent(self):
        state = ReliabilityState()
        run_suspicion_round(0, {1: state}, [1])
        run_suspicion_round(0, {1: state}, [])
        assert state.is_frozen(0)


class TestEnumeration:

    def test_square_has_two_paths(self):
        adjacency = {0: [1, 2], 1: [0, 3], 2: [0, 3], 3: [1, 2]}
        assert sorted(enumerate_simple_paths(adjacency, 0, 3)) == [(0, 1, 3), (0, 2, 3)]


def route_table(sim, source, dest):
    return sim.nodes[source].route_tables[dest]


class TestDiscovery:

    def test_self_route_rejected(self):
        sim = traced_simulator(placed_config([(0, 0), (100, 0)]))
        with pytest.raises(SelfRouteError):
            sim.protocol.originate_discovery(sim.nodes[0], 0)

    def test_request_ids_increase(self):
        sim = traced_simulator(placed_config([(0, 0), (100, 0), (200, 0)]))
        first = sim.protocol.originate_discovery(sim.nodes[0], 1)
        second = sim.protocol.originate_discovery(sim.nodes[0], 2)
        assert second[0] == first[0] and second[1] > first[1]

    def test_one_hop_discovery(self):
        sim = traced_simulator(placed_config([(0, 0), (100, 0)], flows=[(0, 1)], run_time=3.0))
        sim.run()
        entries = route_table(sim, 0, 1).entries
        assert [e.path for e in entries] == [(0, 1)]
        assert entries[0].weight == path_weight(entries[0].link_values)
        assert len(entries[0].link_values) == 1

    def test_chain_stores_single_path(self):
        points = [(0, 0), (400, 0), (800, 0), (1200, 0)]
        sim = traced_simulator(placed_config(points, flows=[(0, 3)], run_time=3.0))
        sim.run()
        table = route_table(sim, 0, 3)
        assert [e.path for e in table.entries] == [(0, 1, 2, 3)]
        assert table.entries[0].weight == path_weight(table.entries[0].link_values)
        assert sim.trace.select(event='drop', node=1, cause='loop') == []
        assert sim.trace.select(event='drop', node=0, cause='own_request')

    def test_triangle_suppresses_duplicates(self):
        points = [(0, 0), (300, 0), (150, 200), (3000, 3000)]
        sim = traced_simulator(placed_config(points, flows=[(0, 3)], run_time=5.0))
        sim.run()
        rebroadcasts = {}
        for record in sim.trace.select(event='send', kind='RREQ'):
            rebroadcasts.setdefault((record['node'], tuple(record['request_id'])), set()).add(record['t'])
        assert rebroadcasts
        assert all(len(times) == 1 for times in rebroadcasts.values())
        assert sim.trace.select(event='drop', kind='RREQ', cause='duplicate')

    def test_unreachable_destination_times_out(self):
        points = [(0, 0), (100, 0), (3000, 3000)]
        sim = traced_simulator(placed_config(points, flows=[(0, 2)], run_time=5.0))
        report = sim.run()
        assert report.delivered == 0
        assert report.drops('no_route') > 0

    def test_frozen_relay_yields_excluded_entry(self):
        points = [(0, 0), (400, 0), (800, 0), (1200, 0)]
        sim = traced_simulator(placed_config(points, flows=[(0, 3)], run_time=1.0))
        sim.nodes[1].reliability.freeze(2)
        sim.run()
        entries = route_table(sim, 0, 3).entries
        assert len(entries) == 1
        assert entries[0].weight == 0.0 and entries[0].excluded
        assert 3 not in sim.nodes[0].active_routes

    def test_first_reply_releases_held_packets(self):
        points = [(0, 0), (400, 0), (800, 0), (1200, 0)]
        sim = traced_simulator(placed_config(points, flows=[(0, 3)], run_time=3.0))
        sim.run()
        provisional = sim.trace.select(event='provisional', node=0)
        selections = sim.trace.select(event='select', node=0)
        delivered = sim.trace.select(event='deliver')
        assert len(provisional) == 1 and len(selections) == 1
        window_close = selections[0]['t']
        assert provisional[0]['t'] < window_close
        assert delivered and delivered[0]['t'] < window_close
        assert provisional[0]['path'] == selections[0]['path'] == [0, 1, 2, 3]

    def test_finished_round_forgotten(self):
        sim = traced_simulator(placed_config([(0, 0), (100, 0), (200, 0)], flows=[(0, 2)], run_time=5.0))
        report = sim.run()
        assert report.discoveries == 1
        assert sim.rounds == {}
        for node in sim.nodes.values():
            assert node.seen_requests == set()
            assert node.rreq_receipts == {}

    def test_missing_destination_fix_uses_angle_floor(self):
        sim = traced_simulator(placed_config([(0, 0), (100, 0)]))
        discovery = sim.open_round((0, 1), 0, 1)
        moving = TimedFix(0.0, 0.01, 0.001, Position(100.0, 0.0), Position(100.2, 0.0))
        still = TimedFix(0.0, 0.01, 0.001, Position(0.0, 0.0), Position(0.0, 0.0))
        reply = ControlMessage(MessageKind.RREP, (0, 1), 0, 1, path_so_far=(0, 1), hop_fix=moving)
        without_fix = sim.protocol.score_reverse_link(sim.nodes[0], reply, 1, discovery)
        stationary = sim.protocol.score_reverse_link(
            sim.nodes[0], replace(reply, dest_fix=still), 1, discovery)
        assert without_fix.xi_T == pytest.approx(stationary.xi_T)
        assert without_fix.nhdf.log_value == pytest.approx(stationary.nhdf.log_value)


def connected(adjacency, count):
    seen, frontier = {0}, deque([0])
    while frontier:
        for n in adjacency[frontier.popleft()]:
            if n not in seen:
                seen.add(n)
                frontier.append(n)
    return len(seen) == count


def random_connected_points(rng, count, side=1300.0, tx_range=500.0):
    while True:
        points = rng.uniform(0, side, size=(count, 2))
        gaps = np.hypot(*(points[:, None, :] - points[None, :, :]).transpose(2, 0, 1))
        adjacency = {i: [j for j in range(count) if j != i and gaps[i, j] <= tx_range] for i in range(count)}
        if connected(adjacency, count):
            return [tuple(map(float, p)) for p in points]


def oracle_weight(sim, path):
    """Independent recomputation of a path's cumulative NHDF, destination side first."""
    cfg = sim.config
    floors = cfg.metric.floors
    accumulated = 0.0
    values = []
    for i in range(len(path) - 2, -1, -1):
        me, sender = path[i], path[i + 1]
        d = sim.estimate_distance(me, sender)
        inputs = MetricInputs(
            transmission_range_phi=cfg.tx_range, displacement_tau=d * floors.theta,
            cumulative_path_delay=accumulated, speed_s=0.0, packet_size_S=cfg.packet_size_bits,
            neighbor_count_V=len(sim.neighbors(me)), data_rate_RT=cfg.data_rate,
            common_channels_Cn=cfg.num_channels, collision_prob_bc=cfg.metric.collision_prob,
            window_z=cfg.metric.backoff_window, switching=0.0)
        score = evaluate_link(inputs, floors)
        accumulated += score.delays.total
        values.append(score.nhdf)
    return path_weight(values)


class TestRouteOptimality:

    def test_selected_route_matches_exhaustive_search(self):
        rng = np.random.default_rng(2024)
        settings = ProtocolSettings(discovery_scope='all_paths')
        for case in range(100):
            count = int(rng.integers(3, 9))
            points = random_connected_points(rng, count)
            config = placed_config(points, flows=[(0, count - 1)], protocol=settings,
                                   run_time=2.5, num_channels=3)
            sim = traced_simulator(config, spectrum=static_spectrum(channels=3))
            sim.run()

            adjacency = {i: sim.neighbors(i) for i in range(count)}
            paths = enumerate_simple_paths(adjacency, 0, count - 1)
            stored = {e.path for e in route_table(sim, 0, count - 1).entries}
            assert stored == set(paths), f"case {case}"
            best = max(oracle_weight(sim, p) for p in paths)
            assert sim.nodes[0].active_routes[count - 1].weight == best, f"case {case}"


def diamond_points(rng=None, far_relay=False):
    points = [(100.0, 1000.0), (400.0, 1300.0), (400.0, 700.0), (700.0, 1000.0), (3000.0, 3000.0)]
    if far_relay:
        points[2] = (3500.0, 500.0)
    if rng is not None:
        points = [(x + float(rng.uniform(-20, 20)), y + float(rng.uniform(-20, 20))) for x, y in points]
    return points


def diamond_channels(favoured, other):
    """The favoured relay shares ten channels with both ends, the other only five."""
    return {favoured: range(10), other: range(5)}


class TestMaintenance:

    def failing_relay_spectrum(self, far_relay):
        sets = {n: ChannelSet.of(c) for n, c in diamond_channels(1, 2).items()}
        return ScriptedSpectrum(sets, changes=[(10.2, 1, ChannelSet.of([]))],
                                default=ChannelSet.full(10), num_channels=10)

    def test_switches_to_stored_alternate(self):
        config = placed_config(diamond_points(), flows=[(0, 3)], run_time=11.0)
        sim = traced_simulator(config, spectrum=self.failing_relay_spectrum(False))
        report = sim.run()
        selections = sim.trace.select(event='select', node=0)
        assert [s['path'] for s in selections] == [[0, 1, 3], [0, 2, 3]]
        assert selections[1]['t'] == pytest.approx(10.2)
        assert report.discoveries == 1
        assert [r for r in sim.trace.select(event='originate', kind='RREQ') if r['t'] > 10.0] == []
        late = [r for r in sim.trace.select(event='deliver') if r['t'] > 10.3]
        assert late and all(r['path'] == [0, 2, 3] for r in late)

    def test_lone_path_triggers_one_discovery(self):
        config = placed_config(diamond_points(far_relay=True), flows=[(0, 3)], run_time=11.0)
        sim = traced_simulator(config, spectrum=self.failing_relay_spectrum(True))
        report = sim.run()
        assert report.discoveries == 2
        again = [r for r in sim.trace.select(event='originate', kind='RREQ') if r['t'] > 10.0]
        assert len(again) == 1 and again[0]['t'] == pytest.approx(10.2)

    def test_unused_link_failure_leaves_table(self):
        sim = traced_simulator(placed_config(diamond_points(), flows=[(0, 3)], run_time=3.0),
                               spectrum=static_spectrum(diamond_channels(1, 2)))
        sim.run()
        source = sim.nodes[0]
        before = list(source.route_tables[3].entries)
        active = sim.protocol.handle_link_failure(source, (2, 4), 3)
        assert source.route_tables[3].entries == before
        assert active is source.active_routes[3]

    def test_no_entry_keeps_failed_link(self):
        sim = traced_simulator(placed_config(diamond_points(), flows=[(0, 3)], run_time=3.0),
                               spectrum=static_spectrum(diamond_channels(1, 2)))
        sim.run()
        source = sim.nodes[0]
        sim.protocol.handle_link_failure(source, (1, 3), 3)
        assert not source.route_tables[3].contains_link((1, 3))
        assert source.active_routes[3].path == (0, 2, 3)


class TestMaliciousExclusion:

    @pytest.mark.parametrize('case', range(20))
    def test_frozen_node_never_selected_again(self, case):
        rng = np.random.default_rng(case)
        malicious, other = (1, 2) if case % 2 == 0 else (2, 1)
        config = placed_config(diamond_points(rng), flows=[(0, 3)], run_time=12.0,
                               malicious=(malicious,))
        sim = traced_simulator(config, spectrum=static_spectrum(diamond_channels(malicious, other)))
        report = sim.run()

        freezes = sim.trace.select(event='freeze', node=malicious)
        assert freezes, "suspicion round never froze the malicious relay"
        frozen_at = freezes[0]['t']
        assert sim.nodes[0].reliability.is_frozen(malicious)
        selections = sim.trace.select(event='select', node=0)
        assert selections[0]['path'] == [0, malicious, 3]
        assert all(malicious not in s['path'] for s in selections if s['t'] >= frozen_at)
        assert all(malicious not in r['path'] for r in sim.trace.select(event='deliver') if r['t'] > frozen_at)
        assert report.drops('malicious_discard') >= config.protocol.suspicion_min_samples
        assert report.suspicion_rounds >= 1

    def test_malicious_flow_source_keeps_its_own_route(self):
        malicious = 1
        config = placed_config(diamond_points(np.random.default_rng(0)), flows=[(0, 3), (malicious, 3)],
                               run_time=12.0, malicious=(malicious,))
        sim = traced_simulator(config, spectrum=static_spectrum(diamond_channels(malicious, 2)))
        sim.run()

        assert sim.trace.select(event='freeze', node=malicious)
        assert sim.nodes[0].reliability.is_frozen(malicious)
        assert not sim.nodes[malicious].reliability.is_frozen(malicious)
        assert sim.trace.select(event='maintain', node=malicious) == []
        assert sim.trace.select(event='originate', kind='RERR', node=3) == []
        assert sim.nodes[malicious].active_routes[3].path == (malicious, 3)
