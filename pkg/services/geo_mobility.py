"""
Vehicle kinematics and position-derived estimators.

Covers RSSI ranging through the log-distance path-loss model, the speed,
heading and displacement estimators consumed by the routing metric, and the
seeded mobility stepper driven by the simulation loop.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterable, Optional, Tuple

import numpy as np

from config.constants import (
    DEFAULT_LATERAL_JITTER,
    DEFAULT_LOSS_EXPONENT,
    DEFAULT_MIN_SPEED_FRACTION,
    DEFAULT_RANGING_NOISE_DB,
    DEFAULT_REFERENCE_DISTANCE,
    DEFAULT_WAVELENGTH,
)
from core.errors import DegenerateMotionError, InvalidInputError


@dataclass(frozen=True)
class Position:
    """Planar coordinates in meters."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise InvalidInputError(f"non-finite position ({self.x}, {self.y})")

    def distance_to(self, other: 'Position') -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def vector_to(self, other: 'Position') -> Tuple[float, float]:
        return (other.x - self.x, other.y - self.y)

    def inside(self, area_side: float) -> bool:
        return 0.0 <= self.x <= area_side and 0.0 <= self.y <= area_side


@dataclass(frozen=True)
class RangingParams:
    """Log-distance model parameters; the measured loss is passed per call."""

    loss_exponent_omega: float = DEFAULT_LOSS_EXPONENT
    wavelength_upsilon: float = DEFAULT_WAVELENGTH
    reference_distance_l0: float = DEFAULT_REFERENCE_DISTANCE
    noise_db: float = DEFAULT_RANGING_NOISE_DB

    def __post_init__(self):
        for name in ('loss_exponent_omega', 'wavelength_upsilon', 'reference_distance_l0'):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise InvalidInputError(f"{name} must be positive, got {value}")
        if not (math.isfinite(self.noise_db) and self.noise_db >= 0):
            raise InvalidInputError(f"noise_db must be non-negative, got {self.noise_db}")

    @property
    def reference_loss(self) -> float:
        """Free-space loss at l0, 20*log10(4*pi*l0/upsilon)."""
        return 20.0 * math.log10(4.0 * math.pi * self.reference_distance_l0 / self.wavelength_upsilon)


@dataclass(frozen=True)
class TimedFix:
    """Receive/send timestamps and coordinates of one replying vehicle."""

    receive_time_T1: float
    send_time_T2: float
    transmission_time_delta: float
    receive_pos: Position
    send_pos: Position

    @property
    def interval(self) -> float:
        return (self.send_time_T2 + self.transmission_time_delta) - self.receive_time_T1


class HeadingPolicy(Enum):
    """How the mobility stepper chooses vehicle headings."""
    STRAIGHT_ROAD_BIDIRECTIONAL = "straight_road_bidirectional"
    RANDOM_WAYPOINT = "random_waypoint"
    SCRIPTED = "scripted"


def path_loss_to_distance(kappa: float, params: RangingParams) -> float:
    """
    Inverts a measured path loss into a distance estimate.

    d = 10^((kappa - 20*log10(4*pi*l0/upsilon)) / (10*omega)) * l0

    Raises:
        InvalidInputError: kappa is not finite or the estimate overflows
    """
    if not math.isfinite(kappa):
        raise InvalidInputError(f"path loss must be finite, got {kappa}")
    exponent = (kappa - params.reference_loss) / (10.0 * params.loss_exponent_omega)
    try:
        return math.pow(10.0, exponent) * params.reference_distance_l0
    except OverflowError:
        raise InvalidInputError(f"path loss {kappa} dB is outside the representable range")


def distance_to_path_loss(d: float, params: RangingParams) -> float:
    """Path loss a receiver at distance d would observe (exact inverse of the ranging model)."""
    if not (math.isfinite(d) and d > 0):
        raise InvalidInputError(f"distance must be positive, got {d}")
    return params.reference_loss + 10.0 * params.loss_exponent_omega * math.log10(d / params.reference_distance_l0)


def observe_path_loss(d: float, params: RangingParams,
                      rng: Optional[np.random.Generator] = None) -> float:
    """Synthesised RSSI-derived loss, with Gaussian dB noise when configured."""
    kappa = distance_to_path_loss(d, params)
    if params.noise_db > 0 and rng is not None:
        kappa += float(rng.normal(0.0, params.noise_db))
    return kappa


def estimate_distance(d: float, params: RangingParams,
                      rng: Optional[np.random.Generator] = None) -> float:
    """Distance a receiver infers from the synthesised loss of a sender at true distance d."""
    return path_loss_to_distance(observe_path_loss(d, params, rng), params)


def estimate_speed(fix: TimedFix) -> float:
    """
    Speed of the replying vehicle over its receive/send window.

    Displacement is the Euclidean distance between the receive and the send
    coordinates, not a mix of x and y taken from a single fix.
    """
    interval = fix.interval
    if not (math.isfinite(interval) and interval > 0):
        raise InvalidInputError(f"time interval must be positive, got {interval}")
    return fix.receive_pos.distance_to(fix.send_pos) / interval


def heading_angle(neighbor_recv: Position, neighbor_send: Position,
                  dest_recv: Position, dest_send: Position) -> float:
    """
    Angle in [0, pi] between the neighbor's and the destination's movement vectors.

    Raises:
        DegenerateMotionError: either vehicle did not move between its fixes
    """
    v1 = neighbor_recv.vector_to(neighbor_send)
    v2 = dest_recv.vector_to(dest_send)
    n1 = math.hypot(*v1)
    n2 = math.hypot(*v2)
    if n1 == 0.0 or n2 == 0.0:
        raise DegenerateMotionError("zero-length movement vector")
    cosine = (v1[0] * v2[0] + v1[1] * v2[1]) / (n1 * n2)
    return math.acos(max(-1.0, min(1.0, cosine)))


def displacement(d: float, theta: float) -> float:
    """Arc displacement tau_v = d * theta."""
    if not math.isfinite(d) or d < 0:
        raise InvalidInputError(f"distance must be non-negative, got {d}")
    if not math.isfinite(theta) or theta < 0:
        raise InvalidInputError(f"angle must be non-negative, got {theta}")
    return d * theta


class MobilityModel:
    """
    Seeded mobility stepper.

    Vehicles keep their own velocity vector between steps; the stepper only
    re-targets, re-jitters and reflects them at the square area boundary.
    """

    def __init__(self, area_side: float, max_speed: float,
                 heading_policy: HeadingPolicy = HeadingPolicy.STRAIGHT_ROAD_BIDIRECTIONAL,
                 rng_seed: int = 0,
                 lateral_jitter: float = DEFAULT_LATERAL_JITTER,
                 min_speed_fraction: float = DEFAULT_MIN_SPEED_FRACTION):
        if not (math.isfinite(area_side) and area_side > 0):
            raise InvalidInputError(f"area_side must be positive, got {area_side}")
        if not (math.isfinite(max_speed) and max_speed >= 0):
            raise InvalidInputError(f"max_speed must be non-negative, got {max_speed}")
        self.area_side = float(area_side)
        self.max_speed = float(max_speed)
        self.heading_policy = HeadingPolicy(heading_policy)
        self.rng_seed = rng_seed
        self.lateral_jitter = lateral_jitter
        self.min_speed_fraction = min_speed_fraction
        self._rng = np.random.default_rng([rng_seed, 0x4D0B])

    def random_position(self) -> Position:
        x, y = self._rng.uniform(0.0, self.area_side, size=2)
        return Position(float(x), float(y))

    def _draw_speed(self) -> float:
        if self.max_speed == 0.0:
            return 0.0
        return float(self._rng.uniform(self.min_speed_fraction * self.max_speed, self.max_speed))

    def _jittered(self, speed: float, direction: float) -> Tuple[float, float]:
        phi = float(self._rng.uniform(-self.lateral_jitter, self.lateral_jitter))
        return (direction * speed * math.cos(phi), speed * math.sin(phi))

    def initialise(self, node) -> None:
        """Assigns a starting velocity (and waypoint) to a freshly placed node."""
        if self.heading_policy is HeadingPolicy.SCRIPTED:
            return
        speed = self._draw_speed()
        node.speed = speed
        if self.heading_policy is HeadingPolicy.STRAIGHT_ROAD_BIDIRECTIONAL:
            direction = 1.0 if self._rng.random() < 0.5 else -1.0
            node.velocity = self._jittered(speed, direction)
        else:
            node.waypoint = self.random_position()
            node.velocity = self._toward(node.position, node.waypoint, speed)

    @staticmethod
    def _toward(origin: Position, target: Position, speed: float) -> Tuple[float, float]:
        dx, dy = origin.vector_to(target)
        norm = math.hypot(dx, dy)
        if norm == 0.0 or speed == 0.0:
            return (0.0, 0.0)
        return (speed * dx / norm, speed * dy / norm)

    def _reflect(self, value: float, velocity: float) -> Tuple[float, float]:
        side = self.area_side
        if value < 0.0:
            value, velocity = -value, -velocity
        elif value > side:
            value, velocity = 2.0 * side - value, -velocity
        return min(max(value, 0.0), side), velocity

    def _step_straight(self, node, dt: float) -> Position:
        vx, vy = node.velocity
        if vx == 0.0 and vy == 0.0:
            return node.position
        direction = 1.0 if vx >= 0.0 else -1.0
        vx, vy = self._jittered(math.hypot(vx, vy), direction)
        x, vx = self._reflect(node.position.x + vx * dt, vx)
        y, vy = self._reflect(node.position.y + vy * dt, vy)
        node.velocity = (vx, vy)
        return Position(x, y)

    def _step_waypoint(self, node, dt: float) -> Position:
        speed = getattr(node, 'speed', 0.0)
        if speed == 0.0 or node.waypoint is None:
            node.velocity = (0.0, 0.0)
            return node.position
        remaining = node.position.distance_to(node.waypoint)
        travel = speed * dt
        if travel >= remaining:
            arrived = node.waypoint
            node.waypoint = self.random_position()
            node.speed = self._draw_speed()
            node.velocity = self._toward(arrived, node.waypoint, node.speed)
            return arrived
        vx, vy = self._toward(node.position, node.waypoint, speed)
        node.velocity = (vx, vy)
        return Position(node.position.x + vx * dt, node.position.y + vy * dt)

    def _step_scripted(self, node, dt: float) -> Position:
        vx, vy = node.velocity
        if vx == 0.0 and vy == 0.0:
            return node.position
        x, vx = self._reflect(node.position.x + vx * dt, vx)
        y, vy = self._reflect(node.position.y + vy * dt, vy)
        node.velocity = (vx, vy)
        return Position(x, y)

    def step(self, nodes: Iterable, dt: float, now: Optional[float] = None) -> Dict[int, Position]:
        """Advances every node by dt seconds; returns the new positions by node id."""
        if not math.isfinite(dt) or dt < 0:
            raise InvalidInputError(f"dt must be non-negative, got {dt}")
        ordered = sorted(nodes, key=lambda n: n.node_id)
        if dt == 0.0:
            return {node.node_id: node.position for node in ordered}

        if self.heading_policy is HeadingPolicy.STRAIGHT_ROAD_BIDIRECTIONAL:
            stepper = self._step_straight
        elif self.heading_policy is HeadingPolicy.RANDOM_WAYPOINT:
            stepper = self._step_waypoint
        else:
            stepper = self._step_scripted

        positions = {}
        for node in ordered:
            node.position = stepper(node, dt)
            if now is not None:
                node.step_time = now
            positions[node.node_id] = node.position
        return positions


def step_mobility(nodes: Iterable, dt: float, model: MobilityModel,
                  now: Optional[float] = None) -> Dict[int, Position]:
    """Moves every node by at most max_speed * dt; deterministic for a given seed."""
    return model.step(nodes, dt, now)
