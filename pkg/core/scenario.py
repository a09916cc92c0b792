"""
Scenario files.

A scenario is a YAML mapping holding SimConfig fields, model parameters, the
flows and the sweep axes (protocols, node counts, seeds). Loading is strict:
duplicate keys and unknown keys are errors, and every sweep cell is validated
before anything runs.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Mapping, Tuple, Union

import yaml

from config.constants import DEFAULT_NODE_COUNTS, DEFAULT_PROTOCOLS, DEFAULT_SEEDS
from config.sim_config import SimConfig
from core.errors import ConfigError, ScenarioParseError
from services.simulator import PROTOCOLS
from utils.logger import log_debug

TOP_LEVEL_KEYS = ('simulation', 'spectrum', 'ranging', 'metric', 'protocol', 'flows',
                  'random_flows', 'zero_flows', 'placements', 'scripted_moves', 'malicious',
                  'protocols', 'seeds', 'node_counts')

Cell = Tuple[str, int, int]


class StrictLoader(yaml.SafeLoader):
    """SafeLoader that refuses duplicate mapping keys."""

    def construct_mapping(self, node, deep=False):
        seen = set()
        for key_node, _ in node.value:
            key = self.construct_object(key_node, deep=deep)
            if key in seen:
                raise ScenarioParseError(f"duplicate key {key!r}", line=key_node.start_mark.line + 1)
            seen.add(key)
        return super().construct_mapping(node, deep=deep)


@dataclass(frozen=True)
class ScenarioFile:
    """Validated scenario: the base config plus the sweep axes."""

    base: SimConfig
    protocols: Tuple[str, ...] = DEFAULT_PROTOCOLS
    node_counts: Tuple[int, ...] = DEFAULT_NODE_COUNTS
    seeds: Tuple[int, ...] = DEFAULT_SEEDS
    source: str = ""

    def cells(self) -> List[Cell]:
        """Every (protocol, node_count, seed) in sweep order."""
        return [(p, n, s) for p in self.protocols for n in self.node_counts for s in self.seeds]

    def config_for(self, node_count: int, seed: int) -> SimConfig:
        return self.base.with_overrides(node_count=node_count, seed=seed).validate()

    def restricted(self, protocols: Tuple[str, ...] = (), seeds: Tuple[int, ...] = ()) -> 'ScenarioFile':
        """Copy narrowed to the given protocols and/or replaced seeds."""
        chosen = tuple(protocols) or self.protocols
        _check_protocols(chosen)
        return ScenarioFile(self.base, chosen, self.node_counts, tuple(seeds) or self.seeds, self.source)


def _check_protocols(protocols) -> None:
    for protocol in protocols:
        if protocol not in PROTOCOLS:
            raise ConfigError(f"unknown protocol {protocol!r} (expected one of {', '.join(PROTOCOLS)})",
                              field='protocols')


def _int_tuple(name: str, value: Any) -> Tuple[int, ...]:
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError("must be a non-empty list", field=name)
    for item in value:
        if not isinstance(item, int) or isinstance(item, bool):
            raise ConfigError(f"must hold integers, got {item!r}", field=name)
    return tuple(value)


def load_yaml(text: str) -> Dict[str, Any]:
    """Parses scenario text; syntax errors carry the 1-based line."""
    try:
        data = yaml.load(text, Loader=StrictLoader)
    except yaml.MarkedYAMLError as e:
        mark = e.problem_mark or e.context_mark
        raise ScenarioParseError(e.problem or str(e), line=mark.line + 1 if mark else None)
    except yaml.YAMLError as e:
        raise ScenarioParseError(str(e))
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ScenarioParseError("top level must be a mapping", line=1)
    return data


def scenario_from_mapping(data: Mapping[str, Any], source: str = "") -> ScenarioFile:
    unknown = sorted(set(data) - set(TOP_LEVEL_KEYS))
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(unknown)}")
    if not (data.get('flows') or data.get('random_flows') or data.get('zero_flows') is True):
        raise ConfigError("define at least one flow (flows or random_flows) or set zero_flows: true",
                          field='flows')

    simulation = data.get('simulation') or {}
    if not isinstance(simulation, Mapping):
        raise ConfigError("must be a mapping", field='simulation')
    node_counts = _int_tuple('node_counts', data['node_counts']) if 'node_counts' in data else ()
    for count in node_counts:
        if count <= 0:
            raise ConfigError(f"must be positive, got {count}", field='node_counts')
    nested = {'simulation', 'protocols', 'seeds', 'node_counts'}
    mapping = {**simulation, **{k: v for k, v in data.items() if k not in nested}}
    if node_counts and 'node_count' not in mapping:
        mapping['node_count'] = max(node_counts)
    elif isinstance(mapping.get('placements'), list) and 'node_count' not in mapping:
        mapping['node_count'] = len(mapping['placements'])
    base = SimConfig.from_mapping(mapping)

    protocols = data.get('protocols') or DEFAULT_PROTOCOLS
    if isinstance(protocols, str) or not isinstance(protocols, (list, tuple)):
        raise ConfigError("must be a list of protocol names", field='protocols')
    protocols = tuple(protocols)
    _check_protocols(protocols)
    if not node_counts:
        if base.placements or 'node_count' in simulation:
            node_counts = (base.node_count,)
        else:
            node_counts = DEFAULT_NODE_COUNTS
    seeds = _int_tuple('seeds', data['seeds']) if 'seeds' in data else DEFAULT_SEEDS

    scenario = ScenarioFile(base, protocols, node_counts, seeds, source)
    for count in node_counts:
        scenario.config_for(count, seeds[0])
    return scenario


def parse_scenario(path: Union[str, Path]) -> ScenarioFile:
    """
    Reads and validates a scenario file.

    Raises:
        ScenarioParseError: malformed YAML or duplicate keys (with line)
        ConfigError: unknown keys, invalid values, or no traffic declared
    """
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as e:
        raise ConfigError(f"cannot read scenario {path}: {e}", field='scenario')
    scenario = scenario_from_mapping(load_yaml(text), source=str(path))
    log_debug(f"Scenario {path}: {len(scenario.cells())} cells")
    return scenario
