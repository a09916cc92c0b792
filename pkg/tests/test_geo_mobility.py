"""Tests for ranging, motion estimators and the mobility stepper."""

import math
from decimal import Decimal, getcontext

import numpy as np
import pytest

from core.errors import DegenerateMotionError, InvalidInputError
from services.geo_mobility import (
    HeadingPolicy,
    MobilityModel,
    Position,
    RangingParams,
    TimedFix,
    displacement,
    distance_to_path_loss,
    estimate_speed,
    heading_angle,
    path_loss_to_distance,
    step_mobility,
)
from services.vehicle import VehicleNode

PI = Decimal("3.14159265358979323846264338327950288419716939937510")


def decimal_distance(kappa, omega, wavelength, l0):
    """High-precision evaluation of the log-distance inversion."""
    getcontext().prec = 50
    k0 = 20 * (4 * PI * Decimal(l0) / Decimal(wavelength)).log10()
    exponent = (Decimal(kappa) - k0) / (10 * Decimal(omega))
    return (Decimal(10) ** exponent) * Decimal(l0)


class TestRanging:

    params = RangingParams(loss_exponent_omega=2.0, wavelength_upsilon=0.0508, reference_distance_l0=1.0)

    def test_reference_loss_maps_to_reference_distance(self):
        for l0 in (0.5, 1.0, 7.0):
            params = RangingParams(2.7, 0.125, l0)
            assert path_loss_to_distance(params.reference_loss, params) == pytest.approx(l0, rel=1e-12)

    def test_eighty_db_example(self):
        d = path_loss_to_distance(80.0, self.params)
        assert d == pytest.approx(40.4, abs=0.05)
        assert d == pytest.approx(float(decimal_distance(80, 2, "0.0508", 1)), rel=1e-9)

    def test_one_decade_above_reference(self):
        for omega in (1.5, 2.0, 3.3):
            params = RangingParams(omega, 0.0508, 2.0)
            d = path_loss_to_distance(params.reference_loss + 10 * omega, params)
            assert d == pytest.approx(20.0, rel=1e-12)

    def test_inverse_examples(self):
        assert distance_to_path_loss(1.0, self.params) == pytest.approx(self.params.reference_loss, rel=1e-12)
        assert distance_to_path_loss(10.0, self.params) == pytest.approx(self.params.reference_loss + 20.0, rel=1e-12)
        d = path_loss_to_distance(80.0, self.params)
        assert distance_to_path_loss(d, self.params) == pytest.approx(80.0, rel=1e-12)

    def test_round_trip_property(self):
        rng = np.random.default_rng(7)
        for d in rng.uniform(1.0, 500.0, size=2000):
            omega = float(rng.uniform(1.5, 4.0))
            params = RangingParams(omega, float(rng.uniform(0.01, 1.0)), float(rng.uniform(0.5, 2.0)))
            back = path_loss_to_distance(distance_to_path_loss(float(d), params), params)
            assert back == pytest.approx(float(d), rel=1e-9)

    def test_monotone_in_path_loss(self):
        kappas = np.linspace(20.0, 140.0, 1500)
        distances = [path_loss_to_distance(float(k), self.params) for k in kappas]
        assert all(b > a for a, b in zip(distances, distances[1:]))

    def test_invalid_inputs(self):
        with pytest.raises(InvalidInputError):
            path_loss_to_distance(math.nan, self.params)
        with pytest.raises(InvalidInputError):
            distance_to_path_loss(0.0, self.params)
        with pytest.raises(InvalidInputError):
            distance_to_path_loss(-3.0, self.params)
        with pytest.raises(InvalidInputError):
            RangingParams(loss_exponent_omega=0.0)


class TestSpeedAndHeading:

    def test_stationary_node(self):
        fix = TimedFix(0.0, 0.5, 0.1, Position(3, 3), Position(3, 3))
        assert estimate_speed(fix) == 0.0

    def test_three_four_five(self):
        fix = TimedFix(0.0, 0.9, 0.1, Position(0, 0), Position(3, 4))
        assert estimate_speed(fix) == pytest.approx(5.0)

    def test_axis_aligned(self):
        fix = TimedFix(1.0, 3.5, 0.5, Position(10, 10), Position(10, 16))
        assert estimate_speed(fix) == pytest.approx(2.0)

    def test_non_positive_interval_rejected(self):
        with pytest.raises(InvalidInputError):
            estimate_speed(TimedFix(2.0, 1.0, 0.5, Position(0, 0), Position(1, 1)))

    def test_speed_translation_and_scaling(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            x0, y0, x1, y1 = rng.uniform(0, 1000, size=4)
            dx, dy = rng.uniform(-500, 500, size=2)
            k = float(rng.uniform(0.1, 10.0))
            base = estimate_speed(TimedFix(0.0, 1.0, 0.25, Position(x0, y0), Position(x1, y1)))
            moved = estimate_speed(TimedFix(0.0, 1.0, 0.25, Position(x0 + dx, y0 + dy), Position(x1 + dx, y1 + dy)))
            scaled = estimate_speed(TimedFix(0.0, 1.0, 0.25, Position(k * x0, k * y0), Position(k * x1, k * y1)))
            assert moved == pytest.approx(base, rel=1e-9, abs=1e-9)
            assert scaled == pytest.approx(k * base, rel=1e-9, abs=1e-9)

    def test_heading_examples(self):
        o = Position(0, 0)
        assert heading_angle(o, Position(1, 0), o, Position(5, 0)) == pytest.approx(0.0, abs=1e-12)
        assert heading_angle(o, Position(1, 0), o, Position(-2, 0)) == pytest.approx(math.pi)
        assert heading_angle(o, Position(1, 0), o, Position(0, 3)) == pytest.approx(math.pi / 2)

    def test_heading_degenerate(self):
        with pytest.raises(DegenerateMotionError):
            heading_angle(Position(1, 1), Position(1, 1), Position(0, 0), Position(1, 0))

    def test_heading_range_and_scale_invariance(self):
        rng = np.random.default_rng(5)
        for _ in range(1000):
            a, b = rng.uniform(-50, 50, size=2), rng.uniform(-50, 50, size=2)
            k = float(rng.uniform(0.1, 20.0))
            o = Position(0, 0)
            theta = heading_angle(o, Position(*a), o, Position(*b))
            scaled = heading_angle(o, Position(*(k * a)), o, Position(*(k * b)))
            assert 0.0 <= theta <= math.pi
            assert scaled == pytest.approx(theta, abs=1e-9)

    def test_displacement(self):
        assert displacement(120.0, 0.0) == 0.0
        assert displacement(100.0, math.pi / 2) == pytest.approx(50 * math.pi)
        assert displacement(0.0, 1.2) == 0.0
        with pytest.raises(InvalidInputError):
            displacement(-1.0, 0.5)


def fleet(model, count):
    nodes = []
    for i in range(count):
        node = VehicleNode(i, model.random_position())
        model.initialise(node)
        nodes.append(node)
    return nodes


class TestMobility:

    @pytest.mark.parametrize('policy', [HeadingPolicy.STRAIGHT_ROAD_BIDIRECTIONAL, HeadingPolicy.RANDOM_WAYPOINT])
    def test_step_bound_and_area(self, policy):
        model = MobilityModel(4000.0, 2.0, policy, rng_seed=3)
        nodes = fleet(model, 50)
        for _ in range(40):
            before = {n.node_id: n.position for n in nodes}
            step_mobility(nodes, 0.5, model)
            for n in nodes:
                assert n.position.distance_to(before[n.node_id]) <= 2.0 * 0.5 + 1e-9
                assert n.position.inside(4000.0)

    def test_zero_speed_freezes(self):
        model = MobilityModel(4000.0, 0.0, rng_seed=1)
        nodes = fleet(model, 10)
        before = [n.position for n in nodes]
        step_mobility(nodes, 0.5, model)
        assert [n.position for n in nodes] == before

    def test_zero_step_freezes(self):
        model = MobilityModel(4000.0, 2.0, rng_seed=1)
        nodes = fleet(model, 10)
        before = [n.position for n in nodes]
        step_mobility(nodes, 0.0, model)
        assert [n.position for n in nodes] == before

    def test_same_seed_same_trajectories(self):
        runs = []
        for _ in range(2):
            model = MobilityModel(4000.0, 2.0, HeadingPolicy.RANDOM_WAYPOINT, rng_seed=42)
            nodes = fleet(model, 200)
            trajectory = []
            for _ in range(20):
                step_mobility(nodes, 0.5, model)
                trajectory.append([(n.position.x, n.position.y) for n in nodes])
            runs.append(trajectory)
        assert runs[0] == runs[1]

    def test_boundary_reflection(self):
        model = MobilityModel(100.0, 4.0, HeadingPolicy.SCRIPTED)
        node = VehicleNode(0, Position(99.0, 50.0), velocity=(4.0, 0.0))
        step_mobility([node], 0.5, model)
        assert node.position.x == pytest.approx(99.0)
        assert node.velocity[0] == -4.0
