"""
Run configuration.

SimConfig and its sections are frozen dataclasses; every default comes from
config.constants. `validate()` raises ConfigError naming the offending field,
and `from_mapping()` builds a config from the plain mappings a scenario file
yields, rejecting keys it does not know.
"""

import math
from dataclasses import dataclass, field, fields, replace
from typing import Any, Dict, Iterable, Mapping, Optional, Tuple

from config.constants import (
    DEFAULT_AREA_SIDE,
    DEFAULT_BACKOFF_WINDOW,
    DEFAULT_COLLISION_PROB,
    DEFAULT_CONTROL_SIZE_BITS,
    DEFAULT_DATA_RATE,
    DEFAULT_DISCOVERY_SCOPE,
    DEFAULT_DISCOVERY_WINDOW,
    DEFAULT_FLOW_COUNT,
    DEFAULT_FLOW_RATE,
    DEFAULT_HOP_LIMIT,
    DEFAULT_MAX_SPEED,
    DEFAULT_MOBILITY_DT,
    DEFAULT_NODE_COUNTS,
    DEFAULT_NUM_CHANNELS,
    DEFAULT_PACKET_SIZE_BYTES,
    DEFAULT_PU_MEAN_OFF,
    DEFAULT_PU_MEAN_ON,
    DEFAULT_QUERY_THRESHOLD,
    DEFAULT_QUEUE_CAPACITY,
    DEFAULT_RUN_TIME,
    DEFAULT_SAMPLE_INTERVAL,
    DEFAULT_SPATIAL_CELLS,
    DEFAULT_SUSPICION_DROP_THRESHOLD,
    DEFAULT_SUSPICION_MIN_SAMPLES,
    DEFAULT_SUSPICION_WINDOW,
    DEFAULT_SWITCH_STEP_DELAY,
    DEFAULT_TX_RANGE,
)
from core.errors import ConfigError, InvalidInputError
from services.geo_mobility import HeadingPolicy, RangingParams
from services.metric import MetricFloors


def _positive(name: str, value: float) -> None:
    if not (isinstance(value, (int, float)) and not isinstance(value, bool)
            and math.isfinite(value) and value > 0):
        raise ConfigError(f"must be a positive number, got {value!r}", field=name)


def _probability(name: str, value: float, open_interval: bool = False) -> None:
    ok = 0.0 < value < 1.0 if open_interval else 0.0 <= value <= 1.0
    if not ok:
        raise ConfigError(f"must lie in {'(0, 1)' if open_interval else '[0, 1]'}, got {value!r}",
                          field=name)


def _reject_unknown(section: str, data: Mapping[str, Any], allowed: Iterable[str]) -> None:
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        where = f"{section}." if section else ""
        raise ConfigError(f"unknown key(s): {', '.join(where + k for k in unknown)}",
                          field=section or None)


@dataclass(frozen=True)
class FlowSpec:
    """One CBR flow."""

    source: int
    dest: int
    rate: float = DEFAULT_FLOW_RATE
    start: float = 0.0
    stop: Optional[float] = None

    def validate(self, node_count: int, index: int = 0) -> None:
        prefix = f"flows[{index}]"
        for end in ('source', 'dest'):
            node = getattr(self, end)
            if not isinstance(node, int) or not (0 <= node < node_count):
                raise ConfigError(f"unknown node id {node!r} (nodes are 0..{node_count - 1})",
                                  field=f"{prefix}.{end}")
        if self.source == self.dest:
            raise ConfigError("source and dest must differ", field=prefix)
        _positive(f"{prefix}.rate", self.rate)
        if self.start < 0:
            raise ConfigError("must be non-negative", field=f"{prefix}.start")
        if self.stop is not None and self.stop <= self.start:
            raise ConfigError("must be after start", field=f"{prefix}.stop")


@dataclass(frozen=True)
class RandomFlows:
    """Source/destination pairs drawn uniformly per seed."""

    count: int = DEFAULT_FLOW_COUNT
    rate: float = DEFAULT_FLOW_RATE


@dataclass(frozen=True)
class NodePlacement:
    """Fixed starting position (and velocity) of one node."""

    node_id: int
    x: float
    y: float
    vx: float = 0.0
    vy: float = 0.0


@dataclass(frozen=True)
class ScriptedMove:
    """Velocity change applied to a node at the first mobility step at or after `time`."""

    node_id: int
    time: float
    vx: float
    vy: float


@dataclass(frozen=True)
class SpectrumSettings:
    mean_on: float = DEFAULT_PU_MEAN_ON
    mean_off: float = DEFAULT_PU_MEAN_OFF
    spatial_cells: int = DEFAULT_SPATIAL_CELLS
    miss_prob: float = 0.0
    false_alarm_prob: float = 0.0
    switch_step_delay: float = DEFAULT_SWITCH_STEP_DELAY


@dataclass(frozen=True)
class MetricSettings:
    collision_prob: float = DEFAULT_COLLISION_PROB
    backoff_window: float = DEFAULT_BACKOFF_WINDOW
    floors: MetricFloors = field(default_factory=MetricFloors)


@dataclass(frozen=True)
class ProtocolSettings:
    hop_limit: int = DEFAULT_HOP_LIMIT
    discovery_window: float = DEFAULT_DISCOVERY_WINDOW
    discovery_scope: str = DEFAULT_DISCOVERY_SCOPE
    suspicion_window: int = DEFAULT_SUSPICION_WINDOW
    suspicion_min_samples: int = DEFAULT_SUSPICION_MIN_SAMPLES
    suspicion_drop_threshold: float = DEFAULT_SUSPICION_DROP_THRESHOLD
    query_threshold: float = DEFAULT_QUERY_THRESHOLD


@dataclass(frozen=True)
class SimConfig:
    """Everything one run needs; defaults mirror the evaluation environment."""

    node_count: int = DEFAULT_NODE_COUNTS[0]
    area_side: float = DEFAULT_AREA_SIDE
    num_channels: int = DEFAULT_NUM_CHANNELS
    run_time: float = DEFAULT_RUN_TIME
    packet_size_bytes: int = DEFAULT_PACKET_SIZE_BYTES
    data_rate: float = DEFAULT_DATA_RATE
    queue_capacity: int = DEFAULT_QUEUE_CAPACITY
    tx_range: float = DEFAULT_TX_RANGE
    max_speed: float = DEFAULT_MAX_SPEED
    mobility_dt: float = DEFAULT_MOBILITY_DT
    sample_interval: float = DEFAULT_SAMPLE_INTERVAL
    control_size_bits: float = DEFAULT_CONTROL_SIZE_BITS
    heading_policy: str = HeadingPolicy.STRAIGHT_ROAD_BIDIRECTIONAL.value
    seed: int = 1

    flows: Tuple[FlowSpec, ...] = ()
    random_flows: Optional[RandomFlows] = field(default_factory=RandomFlows)
    zero_flows: bool = False
    placements: Tuple[NodePlacement, ...] = ()
    scripted_moves: Tuple[ScriptedMove, ...] = ()
    malicious: Tuple[int, ...] = ()

    spectrum: SpectrumSettings = field(default_factory=SpectrumSettings)
    ranging: RangingParams = field(default_factory=RangingParams)
    metric: MetricSettings = field(default_factory=MetricSettings)
    protocol: ProtocolSettings = field(default_factory=ProtocolSettings)

    @property
    def packet_size_bits(self) -> float:
        return float(self.packet_size_bytes * 8)

    def with_overrides(self, **changes) -> 'SimConfig':
        return replace(self, **changes)

    def validate(self) -> 'SimConfig':
        if not isinstance(self.node_count, int) or self.node_count <= 0:
            raise ConfigError(f"must be a positive integer, got {self.node_count!r}", field='node_count')
        for name in ('area_side', 'run_time', 'data_rate', 'tx_range', 'mobility_dt',
                     'sample_interval', 'control_size_bits'):
            _positive(name, getattr(self, name))
        for name in ('num_channels', 'packet_size_bytes', 'queue_capacity'):
            value = getattr(self, name)
            if not isinstance(value, int) or value <= 0:
                raise ConfigError(f"must be a positive integer, got {value!r}", field=name)
        if not (math.isfinite(self.max_speed) and self.max_speed >= 0):
            raise ConfigError(f"must be non-negative, got {self.max_speed!r}", field='max_speed')
        try:
            HeadingPolicy(self.heading_policy)
        except ValueError:
            raise ConfigError(f"unknown policy {self.heading_policy!r}", field='heading_policy')

        for index, flow in enumerate(self.flows):
            flow.validate(self.node_count, index)
        if self.random_flows is not None and not self.flows and not self.zero_flows:
            if not isinstance(self.random_flows.count, int) or self.random_flows.count < 0:
                raise ConfigError("must be a non-negative integer", field='random_flows.count')
            _positive('random_flows.rate', self.random_flows.rate)
            if self.random_flows.count and self.node_count < 2:
                raise ConfigError("random flows need at least two nodes", field='random_flows')

        if self.placements:
            ids = sorted(p.node_id for p in self.placements)
            if ids != list(range(self.node_count)):
                raise ConfigError(f"placements must cover nodes 0..{self.node_count - 1} exactly once",
                                  field='placements')
            for p in self.placements:
                if not (0.0 <= p.x <= self.area_side and 0.0 <= p.y <= self.area_side):
                    raise ConfigError(f"node {p.node_id} placed outside the area", field='placements')
        for move in self.scripted_moves:
            if not (0 <= move.node_id < self.node_count):
                raise ConfigError(f"unknown node id {move.node_id}", field='scripted_moves')
            if move.time < 0:
                raise ConfigError("time must be non-negative", field='scripted_moves')
        for node in self.malicious:
            if not isinstance(node, int) or not (0 <= node < self.node_count):
                raise ConfigError(f"unknown node id {node!r}", field='malicious')

        s = self.spectrum
        if not (s.mean_on > 0 and s.mean_off > 0) or (math.isinf(s.mean_on) and math.isinf(s.mean_off)):
            raise ConfigError("mean_on and mean_off must be positive and not both infinite",
                              field='spectrum')
        if not isinstance(s.spatial_cells, int) or s.spatial_cells <= 0:
            raise ConfigError("must be a positive integer", field='spectrum.spatial_cells')
        _probability('spectrum.miss_prob', s.miss_prob)
        _probability('spectrum.false_alarm_prob', s.false_alarm_prob)
        if not (math.isfinite(s.switch_step_delay) and s.switch_step_delay >= 0):
            raise ConfigError("must be non-negative", field='spectrum.switch_step_delay')

        m = self.metric
        _probability('metric.b_c', m.collision_prob, open_interval=True)
        _positive('metric.window_z', m.backoff_window)

        p = self.protocol
        if not isinstance(p.hop_limit, int) or p.hop_limit <= 0:
            raise ConfigError("must be a positive integer", field='protocol.hop_limit')
        _positive('protocol.discovery_window', p.discovery_window)
        if p.discovery_scope not in ('first_copy', 'all_paths'):
            raise ConfigError(f"must be first_copy or all_paths, got {p.discovery_scope!r}",
                              field='protocol.discovery_scope')
        if not isinstance(p.suspicion_window, int) or p.suspicion_window <= 0:
            raise ConfigError("must be a positive integer", field='protocol.suspicion_window')
        if not (0 < p.suspicion_min_samples <= p.suspicion_window):
            raise ConfigError("must lie in 1..suspicion_window", field='protocol.suspicion_min_samples')
        _probability('protocol.suspicion_drop_threshold', p.suspicion_drop_threshold)
        _probability('protocol.q_t', p.query_threshold)
        return self

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> 'SimConfig':
        """
        Builds a validated config from plain mappings.

        Scalar SimConfig fields sit at the top level next to the nested
        sections `spectrum`, `ranging`, `metric`, `protocol` and the lists
        `flows`, `placements`, `scripted_moves`, `malicious`.
        """
        data = dict(data or {})
        scalars = {f.name for f in fields(cls)} - set(_SECTION_BUILDERS)
        _reject_unknown("", data, scalars | set(_SECTION_BUILDERS))

        kwargs: Dict[str, Any] = {k: v for k, v in data.items() if k in scalars}
        for key, builder in _SECTION_BUILDERS.items():
            if key in data:
                kwargs[key] = builder(data[key])
        try:
            return cls(**kwargs).validate()
        except InvalidInputError as e:
            raise ConfigError(str(e))


def _mapping(section: str, value: Any) -> Mapping[str, Any]:
    if value is None:
        return {}
    if not isinstance(value, Mapping):
        raise ConfigError(f"must be a mapping, got {type(value).__name__}", field=section)
    return value


def _sequence(section: str, value: Any) -> list:
    if value is None:
        return []
    if not isinstance(value, (list, tuple)):
        raise ConfigError(f"must be a list, got {type(value).__name__}", field=section)
    return list(value)


def _renamed(section: str, value: Any, names: Mapping[str, str]) -> Dict[str, Any]:
    data = _mapping(section, value)
    _reject_unknown(section, data, names)
    return {names[k]: v for k, v in data.items()}


def _build_items(section: str, value: Any, cls, names: Mapping[str, str]) -> tuple:
    items = []
    for index, item in enumerate(_sequence(section, value)):
        kwargs = _renamed(f"{section}[{index}]", item, names)
        try:
            items.append(cls(**kwargs))
        except TypeError as e:
            raise ConfigError(str(e), field=f"{section}[{index}]")
    return tuple(items)


def _build_ranging(value: Any) -> RangingParams:
    kwargs = _renamed('ranging', value, {
        'omega': 'loss_exponent_omega', 'wavelength': 'wavelength_upsilon',
        'reference_distance': 'reference_distance_l0', 'noise_db': 'noise_db'})
    try:
        return RangingParams(**kwargs)
    except InvalidInputError as e:
        raise ConfigError(str(e), field='ranging')


def _build_metric(value: Any) -> MetricSettings:
    kwargs = _renamed('metric', value, {
        'b_c': 'collision_prob', 'window_z': 'backoff_window', 'theta_floor': 'theta',
        'speed_floor': 'speed', 'tau_floor': 'tau'})
    floors = {k: kwargs.pop(k) for k in ('theta', 'speed', 'tau') if k in kwargs}
    try:
        return MetricSettings(floors=MetricFloors(**floors), **kwargs)
    except InvalidInputError as e:
        raise ConfigError(str(e), field='metric')


_SECTION_BUILDERS = {
    'spectrum': lambda v: SpectrumSettings(**_renamed('spectrum', v, {
        f.name: f.name for f in fields(SpectrumSettings)})),
    'ranging': _build_ranging,
    'metric': _build_metric,
    'protocol': lambda v: ProtocolSettings(**_renamed('protocol', v, {
        'hop_limit': 'hop_limit', 'discovery_window': 'discovery_window',
        'discovery_scope': 'discovery_scope', 'suspicion_window': 'suspicion_window',
        'suspicion_min_samples': 'suspicion_min_samples',
        'suspicion_drop_threshold': 'suspicion_drop_threshold', 'q_t': 'query_threshold'})),
    'flows': lambda v: _build_items('flows', v, FlowSpec, {
        'source': 'source', 'dest': 'dest', 'rate': 'rate', 'start': 'start', 'stop': 'stop'}),
    'random_flows': lambda v: None if v is None else RandomFlows(**_renamed('random_flows', v, {
        'count': 'count', 'rate': 'rate'})),
    'placements': lambda v: _build_items('placements', v, NodePlacement, {
        'node': 'node_id', 'x': 'x', 'y': 'y', 'vx': 'vx', 'vy': 'vy'}),
    'scripted_moves': lambda v: _build_items('scripted_moves', v, ScriptedMove, {
        'node': 'node_id', 'time': 'time', 'vx': 'vx', 'vy': 'vy'}),
    'malicious': lambda v: tuple(_sequence('malicious', v)),
}
