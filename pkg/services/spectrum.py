"""
Primary-user channel occupancy and secondary-user sensing.

Occupancy is a two-state (busy/idle) continuous-time Markov process per
channel and per spatial cell. Every (cell, channel) track draws from its own
seeded stream, so a sensing read is a pure function of (cell, time, seed)
regardless of the order in which the simulation asks.
"""

import math
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, Iterator, List, Mapping, NewType, Optional

import numpy as np

from config.constants import (
    DEFAULT_AREA_SIDE,
    DEFAULT_NUM_CHANNELS,
    DEFAULT_PU_MEAN_OFF,
    DEFAULT_PU_MEAN_ON,
    DEFAULT_SPATIAL_CELLS,
)
from core.errors import InvalidInputError
from services.geo_mobility import Position

ChannelId = NewType('ChannelId', int)

_SENSE_CACHE_LIMIT = 4096


@dataclass(frozen=True)
class ChannelSet:
    """Idle channels seen by one node."""

    idle: FrozenSet[int] = frozenset()

    @classmethod
    def full(cls, num_channels: int = DEFAULT_NUM_CHANNELS) -> 'ChannelSet':
        return cls(frozenset(range(num_channels)))

    @classmethod
    def of(cls, channels: Iterable[int]) -> 'ChannelSet':
        return cls(frozenset(int(c) for c in channels))

    def __len__(self) -> int:
        return len(self.idle)

    def __iter__(self) -> Iterator[int]:
        return iter(sorted(self.idle))

    def __contains__(self, channel: int) -> bool:
        return channel in self.idle


@dataclass(frozen=True)
class PuTransition:
    """A channel switching state inside one cell."""
    time: float
    cell: int
    channel: int
    busy: bool


def common_idle_count(a: ChannelSet, b: ChannelSet) -> int:
    """Number of channels idle at both endpoints (C_n)."""
    return len(a.idle & b.idle)


def operating_channel(a: ChannelSet, b: ChannelSet) -> Optional[ChannelId]:
    """Lowest-index common idle channel, or None when the link has none."""
    common = a.idle & b.idle
    return ChannelId(min(common)) if common else None


def switching_delay(p: ChannelId, q: ChannelId, a: float) -> float:
    """Tuning delay a * |p - q| to move from channel p to channel q."""
    if p < 0 or q < 0:
        raise InvalidInputError(f"channel ids must be non-negative, got {p} and {q}")
    if not math.isfinite(a) or a < 0:
        raise InvalidInputError(f"switch step delay must be non-negative, got {a}")
    return a * abs(int(p) - int(q))


class _CellTrack:
    """Merged switch times of every channel in one cell, up to a horizon."""

    def __init__(self, seed: int, cell: int, num_channels: int,
                 mean_on: float, mean_off: float, horizon: float):
        self.horizon = horizon
        if math.isinf(mean_on):
            p_busy = 1.0
        elif math.isinf(mean_off):
            p_busy = 0.0
        else:
            p_busy = mean_on / (mean_on + mean_off)

        initial = np.zeros(num_channels, dtype=bool)
        per_channel: List[np.ndarray] = []
        for channel in range(num_channels):
            rng = np.random.default_rng([seed, cell, channel])
            busy = bool(rng.random() < p_busy)
            initial[channel] = busy
            times = []
            t = 0.0
            while True:
                mean = mean_on if busy else mean_off
                if math.isinf(mean):
                    break
                t += float(rng.exponential(mean))
                if t > horizon:
                    break
                times.append(t)
                busy = not busy
            per_channel.append(np.asarray(times, dtype=float))

        self.initial_busy = initial
        self.per_channel = per_channel
        if per_channel:
            times = np.concatenate(per_channel)
            channels = np.concatenate([np.full(len(t), c, dtype=np.int64) for c, t in enumerate(per_channel)])
            ordinals = np.concatenate([np.arange(1, len(t) + 1, dtype=np.int64) for t in per_channel])
        else:
            times = np.zeros(0)
            channels = ordinals = np.zeros(0, dtype=np.int64)
        order = np.argsort(times, kind='stable')
        self.times = times[order]
        self.channels = channels[order]
        self.ordinals = ordinals[order]

    def busy_at(self, time: float) -> np.ndarray:
        count = int(np.searchsorted(self.times, time, side='right'))
        flips = np.bincount(self.channels[:count], minlength=len(self.initial_busy)) & 1
        return self.initial_busy ^ flips.astype(bool)


class PuActivityModel:
    """
    Seeded primary-user occupancy over a grid of independent cells.

    Args:
        mean_on: mean busy period in seconds (math.inf keeps a busy channel busy)
        mean_off: mean idle period in seconds (math.inf keeps an idle channel idle)
        spatial_cells: cells per side of the square area
        miss_prob / false_alarm_prob: sensing error probabilities, default 0
    """

    def __init__(self, mean_on: float = DEFAULT_PU_MEAN_ON, mean_off: float = DEFAULT_PU_MEAN_OFF,
                 num_channels: int = DEFAULT_NUM_CHANNELS, spatial_cells: int = DEFAULT_SPATIAL_CELLS,
                 area_side: float = DEFAULT_AREA_SIDE, rng_seed: int = 0,
                 miss_prob: float = 0.0, false_alarm_prob: float = 0.0, horizon: float = 200.0):
        if not (mean_on > 0 and mean_off > 0):
            raise InvalidInputError("mean_on and mean_off must be positive")
        if math.isinf(mean_on) and math.isinf(mean_off):
            raise InvalidInputError("mean_on and mean_off cannot both be infinite")
        if num_channels <= 0 or spatial_cells <= 0:
            raise InvalidInputError("num_channels and spatial_cells must be positive")
        for name, prob in (('miss_prob', miss_prob), ('false_alarm_prob', false_alarm_prob)):
            if not (0.0 <= prob <= 1.0):
                raise InvalidInputError(f"{name} must lie in [0, 1], got {prob}")
        self.mean_on = float(mean_on)
        self.mean_off = float(mean_off)
        self.num_channels = int(num_channels)
        self.spatial_cells = int(spatial_cells)
        self.area_side = float(area_side)
        self.rng_seed = int(rng_seed)
        self.miss_prob = float(miss_prob)
        self.false_alarm_prob = float(false_alarm_prob)
        self._horizon = max(float(horizon), 1.0)
        self._tracks: Dict[int, _CellTrack] = {}
        self._sense_cache: Dict[tuple, ChannelSet] = {}

    @property
    def cell_count(self) -> int:
        return self.spatial_cells * self.spatial_cells

    def cell_of(self, position: Position) -> int:
        width = self.area_side / self.spatial_cells
        col = min(max(int(position.x // width), 0), self.spatial_cells - 1)
        row = min(max(int(position.y // width), 0), self.spatial_cells - 1)
        return row * self.spatial_cells + col

    def _track(self, cell: int, time: float) -> _CellTrack:
        if time > self._horizon:
            while self._horizon < time:
                self._horizon *= 2.0
            self._tracks.clear()
            self._sense_cache.clear()
        track = self._tracks.get(cell)
        if track is None:
            track = _CellTrack(self.rng_seed, cell, self.num_channels,
                               self.mean_on, self.mean_off, self._horizon)
            self._tracks[cell] = track
        return track

    def busy_mask(self, cell: int, time: float) -> np.ndarray:
        """Ground-truth PU occupancy of every channel in a cell."""
        return self._track(cell, time).busy_at(time)

    def sense_cell(self, cell: int, time: float) -> ChannelSet:
        key = (cell, time)
        cached = self._sense_cache.get(key)
        if cached is not None:
            return cached
        busy = self.busy_mask(cell, time)
        if self.miss_prob > 0.0 or self.false_alarm_prob > 0.0:
            rng = np.random.default_rng([self.rng_seed, cell, 0x5E45, int(round(time * 1e6))])
            draws = rng.random(self.num_channels)
            missed = busy & (draws < self.miss_prob)
            false_alarm = ~busy & (draws < self.false_alarm_prob)
            busy = (busy & ~missed) | false_alarm
        idle = ChannelSet(frozenset(int(c) for c in np.flatnonzero(~busy)))
        if len(self._sense_cache) >= _SENSE_CACHE_LIMIT:
            self._sense_cache.clear()
        self._sense_cache[key] = idle
        return idle

    def sense(self, node_position: Position, time: float) -> ChannelSet:
        """Idle channels at the node's cell; identical inputs give identical sets."""
        return self.sense_cell(self.cell_of(node_position), time)

    def idle_set(self, node_id: int, position: Position, time: float) -> ChannelSet:
        return self.sense(position, time)

    def idle_fraction(self, cell: int, channel: int, t_end: float) -> float:
        """Exact time-weighted fraction of [0, t_end] the channel spent idle."""
        track = self._track(cell, t_end)
        switches = track.per_channel[channel]
        busy = bool(track.initial_busy[channel])
        idle_time = 0.0
        last = 0.0
        for t in switches:
            if t > t_end:
                break
            if not busy:
                idle_time += t - last
            last = float(t)
            busy = not busy
        if not busy:
            idle_time += t_end - last
        return idle_time / t_end

    def transitions_between(self, t0: float, t1: float) -> List[PuTransition]:
        """Every switch in (t0, t1] across all cells, ordered by time then cell."""
        events = []
        for cell in range(self.cell_count):
            track = self._track(cell, t1)
            lo = int(np.searchsorted(track.times, t0, side='right'))
            hi = int(np.searchsorted(track.times, t1, side='right'))
            for k in range(lo, hi):
                channel = int(track.channels[k])
                busy = bool(track.initial_busy[channel]) ^ bool(track.ordinals[k] & 1)
                events.append(PuTransition(float(track.times[k]), cell, channel, busy))
        events.sort(key=lambda e: (e.time, e.cell, e.channel))
        return events


class StaticSpectrum:
    """Fixed per-node idle sets with no PU dynamics."""

    def __init__(self, node_sets: Mapping[int, ChannelSet], default: Optional[ChannelSet] = None,
                 num_channels: int = DEFAULT_NUM_CHANNELS):
        self.node_sets = dict(node_sets)
        self.default = default if default is not None else ChannelSet.full(num_channels)
        self.num_channels = num_channels

    def cell_of(self, position: Position) -> int:
        return 0

    def idle_set(self, node_id: int, position: Position, time: float) -> ChannelSet:
        return self.node_sets.get(node_id, self.default)

    def transitions_between(self, t0: float, t1: float) -> List[PuTransition]:
        return []


def sense(node_position: Position, time: float, model: PuActivityModel) -> ChannelSet:
    """Idle channels at a position, read from the model's occupancy process."""
    return model.sense(node_position, time)


class ScriptedSpectrum(StaticSpectrum):
    """
    Per-node idle sets that change at scripted times.

    `changes` holds (time, node_id, idle set) triples; a node keeps its latest
    set at or before the queried time. A change that removes channels is
    reported as a busy transition.
    """

    def __init__(self, node_sets: Mapping[int, ChannelSet],
                 changes: Iterable[tuple] = (), default: Optional[ChannelSet] = None,
                 num_channels: int = DEFAULT_NUM_CHANNELS):
        super().__init__(node_sets, default, num_channels)
        self.changes = sorted(((float(t), int(n), s) for t, n, s in changes),
                              key=lambda c: (c[0], c[1]))

    def _set_at(self, node_id: int, time: float, inclusive: bool = True) -> ChannelSet:
        current = self.node_sets.get(node_id, self.default)
        for t, node, idle in self.changes:
            if t > time or (t == time and not inclusive):
                break
            if node == node_id:
                current = idle
        return current

    def idle_set(self, node_id: int, position: Position, time: float) -> ChannelSet:
        return self._set_at(node_id, time)

    def transitions_between(self, t0: float, t1: float) -> List[PuTransition]:
        events = []
        for t, node, idle in self.changes:
            if not (t0 < t <= t1):
                continue
            before = self._set_at(node, t, inclusive=False)
            lost = sorted(before.idle - idle.idle)
            gained = sorted(idle.idle - before.idle)
            if lost:
                events.append(PuTransition(t, node, lost[0], True))
            elif gained:
                events.append(PuTransition(t, node, gained[0], False))
        return events
