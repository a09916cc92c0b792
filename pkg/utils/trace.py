"""
Line-delimited JSON event trace.

One record per message send, receive or drop plus protocol milestones
(discovery origination, route store/select, maintenance). Disabled recorders
cost one attribute check per call.

Every line is strict JSON: non-finite floats (an overflowed path weight, an
excluded log weight) are written as the strings "inf", "-inf" and "nan".
"""

import json
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from core.errors import OutputError


def json_safe(value: Any) -> Any:
    """Replaces non-finite floats, also inside lists and dicts, by string markers."""
    if isinstance(value, float) and not math.isfinite(value):
        if math.isnan(value):
            return 'nan'
        return 'inf' if value > 0 else '-inf'
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    if isinstance(value, dict):
        return {k: json_safe(v) for k, v in value.items()}
    return value


def dump_record(record: Dict[str, Any]) -> str:
    return json.dumps(record, sort_keys=True, allow_nan=False)


class TraceRecorder:
    """Collects trace records in memory and optionally streams them to a .jsonl file."""

    def __init__(self, enabled: bool = False, path: Optional[Union[str, Path]] = None):
        self.enabled = enabled or path is not None
        self.records: List[Dict[str, Any]] = []
        self._stream = None
        if path is not None:
            try:
                Path(path).parent.mkdir(parents=True, exist_ok=True)
                self._stream = open(path, 'w', encoding='utf-8')
            except OSError as e:
                raise OutputError(f"cannot open trace file {path}: {e}")

    def record(self, t: float, event: str, kind: str, node: int, peer: Optional[int] = None,
               origin: Optional[int] = None, target: Optional[int] = None,
               request_id: Optional[list] = None, cause: Optional[str] = None, **extra) -> None:
        if not self.enabled:
            return
        entry = {'t': t, 'event': event, 'kind': kind, 'node': node, 'peer': peer,
                 'origin': origin, 'target': target, 'request_id': request_id, 'cause': cause}
        entry.update(extra)
        entry = json_safe(entry)
        self.records.append(entry)
        if self._stream is not None:
            self._stream.write(dump_record(entry) + '\n')

    def select(self, **criteria) -> List[Dict[str, Any]]:
        """Records whose fields equal every given criterion."""
        return [r for r in self.records if all(r.get(k) == v for k, v in criteria.items())]

    def lines(self) -> List[str]:
        return [dump_record(r) for r in self.records]

    def close(self) -> None:
        if self._stream is not None:
            self._stream.close()
            self._stream = None
