"""
Routing metric: link delays, transmit weight, reliability and NHDF.

All functions are pure. An NHDF value keeps its natural logarithm next to the
plain value because (xi_T / delta_E) ** C_n leaves binary64 range for the
channel counts of a 100-channel group. Paths compare by their plain sums
while both are finite and by the log weight once a sum overflows.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence, Union

from config.constants import (
    DEFAULT_BACKOFF_WINDOW,
    DEFAULT_COLLISION_PROB,
    DEFAULT_SPEED_FLOOR,
    DEFAULT_TAU_FLOOR,
    DEFAULT_THETA_FLOOR,
)
from core.errors import (
    DegenerateContentionError,
    InvalidInputError,
    InvariantViolation,
)


class RfMarker(Enum):
    """Reliability factor frozen to infinity (node judged malicious)."""
    INFINITE = "infinite"


INFINITE_RF = RfMarker.INFINITE
Reliability = Union[float, RfMarker]


def is_infinite_rf(rf: Reliability) -> bool:
    return rf is INFINITE_RF


@dataclass(frozen=True)
class LinkDelays:
    """Queuing, back-off and switching components of one link's delay."""

    queuing: float
    backoff: float
    switching: float

    def __post_init__(self):
        for name in ('queuing', 'backoff', 'switching'):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise InvalidInputError(f"{name} delay must be finite and non-negative, got {value}")

    @property
    def total(self) -> float:
        return self.queuing + self.backoff + self.switching


@dataclass(frozen=True)
class MetricFloors:
    """Lower bounds substituted before values reach the transmit weight."""

    theta: float = DEFAULT_THETA_FLOOR
    speed: float = DEFAULT_SPEED_FLOOR
    tau: float = DEFAULT_TAU_FLOOR

    def __post_init__(self):
        if not (self.theta > 0 and self.speed > 0 and self.tau > 0):
            raise InvalidInputError("metric floors must be positive")


@dataclass(frozen=True)
class MetricInputs:
    """
    Everything one link score needs.

    cumulative_path_delay is the delay already accumulated along the partial
    path; evaluate_link adds the scored link's own delay to it.
    """

    transmission_range_phi: float
    displacement_tau: float
    cumulative_path_delay: float
    speed_s: float
    packet_size_S: float
    neighbor_count_V: int
    data_rate_RT: float
    common_channels_Cn: int
    reliability_RF: Reliability = 1.0
    collision_prob_bc: float = DEFAULT_COLLISION_PROB
    window_z: float = DEFAULT_BACKOFF_WINDOW
    switching: float = 0.0

    def __post_init__(self):
        if not self.transmission_range_phi > 0:
            raise InvalidInputError("transmission range must be positive")
        if not (0.0 < self.collision_prob_bc < 1.0):
            raise InvalidInputError("collision probability must lie in (0, 1)")
        if self.neighbor_count_V < 0 or self.common_channels_Cn < 0:
            raise InvalidInputError("neighbor and channel counts must be non-negative")
        if self.displacement_tau < 0 or self.speed_s < 0 or self.cumulative_path_delay < 0:
            raise InvalidInputError("displacement, speed and path delay must be non-negative")
        if not is_infinite_rf(self.reliability_RF) and self.reliability_RF < 1.0:
            raise InvalidInputError("reliability factor must be at least 1")


@dataclass(frozen=True)
class Nhdf:
    """Next-hop determination factor of one link."""

    value: float
    log_value: float
    excluded: bool = False

    @classmethod
    def excluded_link(cls) -> 'Nhdf':
        return cls(0.0, -math.inf, True)

    @classmethod
    def of(cls, value: float) -> 'Nhdf':
        if not value >= 0:
            raise InvalidInputError(f"NHDF must be non-negative, got {value}")
        return cls(float(value), math.log(value) if value > 0 else -math.inf)

    def scaled(self, factor: float) -> 'Nhdf':
        if self.excluded:
            return self
        return Nhdf(self.value * factor, self.log_value + math.log(factor))


@dataclass(frozen=True)
class LinkScore:
    nhdf: Nhdf
    delays: LinkDelays
    xi_T: float
    path_delay: float


def queuing_delay(S: float, V_i: int, RT_i: float) -> float:
    """Time for V_i packets of S bits to drain at RT_i bits/second."""
    if not (math.isfinite(RT_i) and RT_i > 0):
        raise InvalidInputError(f"data rate must be positive, got {RT_i}")
    if V_i < 0 or S < 0:
        raise InvalidInputError("packet size and neighbor count must be non-negative")
    return S * V_i / RT_i


def backoff_delay(b_c: float, V_i: int, z: float) -> float:
    """
    Expected back-off with V_i contenders and collision probability b_c.

    Raises:
        InvalidInputError: b_c outside (0, 1) or negative window
        DegenerateContentionError: V_i <= 1 leaves the formula undefined
    """
    if not (0.0 < b_c < 1.0):
        raise InvalidInputError(f"collision probability must lie in (0, 1), got {b_c}")
    if not math.isfinite(z) or z < 0:
        raise InvalidInputError(f"window must be non-negative, got {z}")
    if V_i <= 1:
        raise DegenerateContentionError(f"back-off undefined for {V_i} contenders")
    return z / ((1.0 - b_c) * (1.0 - (1.0 - b_c) ** (V_i - 1)))


def contention_backoff(b_c: float, V_i: int, z: float) -> float:
    """Back-off delay, one contention window when the node has no contender."""
    try:
        return backoff_delay(b_c, V_i, z)
    except DegenerateContentionError:
        return z


def link_delay(d: LinkDelays) -> float:
    return d.total


def transmit_weight(phi: float, tau_v: float, path_delay: float, s: float) -> float:
    """xi_T = phi / (tau_v * path_delay * s)."""
    if not (math.isfinite(phi) and phi > 0):
        raise InvalidInputError(f"transmission range must be positive, got {phi}")
    denominator = tau_v * path_delay * s
    if not (tau_v > 0 and path_delay > 0 and s > 0 and denominator > 0):
        raise InvariantViolation(
            f"transmit weight denominator is zero (tau={tau_v}, delay={path_delay}, s={s})")
    return phi / denominator


def reliability(RN: int) -> Reliability:
    """RF = e^RN; the report count saturates to the infinite marker on overflow."""
    if RN < 0:
        raise InvalidInputError(f"report count must be non-negative, got {RN}")
    try:
        return math.exp(RN)
    except OverflowError:
        return INFINITE_RF


def link_nhdf(xi_T: float, delta_E: float, C_n: int, RF: Reliability) -> Nhdf:
    """
    (xi_T / delta_E) ** C_n / RF, or the excluded marker.

    A link is excluded when its RF is infinite or when the endpoints share no
    idle channel, since such a link cannot carry traffic.
    """
    if not (math.isfinite(delta_E) and delta_E > 0):
        raise InvalidInputError(f"link delay must be positive, got {delta_E}")
    if C_n < 0:
        raise InvalidInputError(f"common channel count must be non-negative, got {C_n}")
    if is_infinite_rf(RF) or C_n == 0:
        return Nhdf.excluded_link()
    if RF < 1.0:
        raise InvalidInputError(f"reliability factor must be at least 1, got {RF}")
    if not (math.isfinite(xi_T) and xi_T > 0):
        raise InvalidInputError(f"transmit weight must be positive, got {xi_T}")

    base = xi_T / delta_E
    log_value = C_n * math.log(base) - math.log(RF)
    try:
        value = math.pow(base, C_n) / RF
    except OverflowError:
        return Nhdf(math.inf, log_value)
    if value > 0 and math.isfinite(value):
        log_value = math.log(value)
    return Nhdf(value, log_value)


def evaluate_link(inputs: MetricInputs, floors: MetricFloors = MetricFloors()) -> LinkScore:
    """Scores one link from raw inputs, applying the floors."""
    delays = LinkDelays(
        queuing=queuing_delay(inputs.packet_size_S, inputs.neighbor_count_V, inputs.data_rate_RT),
        backoff=contention_backoff(inputs.collision_prob_bc, inputs.neighbor_count_V, inputs.window_z),
        switching=inputs.switching,
    )
    path_delay = inputs.cumulative_path_delay + delays.total
    tau = max(inputs.displacement_tau, floors.tau)
    speed = max(inputs.speed_s, floors.speed)
    xi = transmit_weight(inputs.transmission_range_phi, tau, path_delay, speed)
    nhdf = link_nhdf(xi, delays.total, inputs.common_channels_Cn, inputs.reliability_RF)
    return LinkScore(nhdf=nhdf, delays=delays, xi_T=xi, path_delay=path_delay)


def path_weight(link_values: Sequence[Nhdf]) -> float:
    """Cumulative NHDF of a path; zero when empty or when any link is excluded."""
    if not link_values or any(v.excluded for v in link_values):
        return 0.0
    return math.fsum(v.value for v in link_values)


def path_log_weight(link_values: Sequence[Nhdf]) -> float:
    """Natural log of path_weight, computed in the log domain when the sum overflows."""
    if not link_values or any(v.excluded for v in link_values):
        return -math.inf
    total = math.fsum(v.value for v in link_values)
    if math.isfinite(total) and total > 0:
        return math.log(total)
    logs = [v.log_value for v in link_values]
    peak = max(logs)
    if not math.isfinite(peak):
        return peak
    return peak + math.log(math.fsum(math.exp(l - peak) for l in logs))
