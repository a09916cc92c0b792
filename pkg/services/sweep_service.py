"""
Sweep orchestration over (protocol, node_count, seed) cells.

Cells are independent runs; with more than one worker they execute in a
process pool and are reassembled in cell order, so the rows depend on the
scenario alone.
"""

import concurrent.futures
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from config.sim_config import SimConfig
from core.environment import get_environment_detector
from core.errors import InvariantViolation
from core.scenario import Cell, ScenarioFile
from services.metrics_collector import DROP_CAUSES, MetricsReport
from services.simulator import run
from utils.logger import log_info
from utils.trace import TraceRecorder


@dataclass(frozen=True)
class ResultRow:
    """One CSV row, one run."""

    protocol: str
    node_count: int
    seed: int
    sent: int
    delivered: int
    dropped: int
    in_flight_at_end: int
    pdr: Optional[float]
    throughput_pps: float
    throughput_bps: float
    mean_e2e_delay_s: Optional[float]
    dropped_by_cause: Tuple[Tuple[str, int], ...]

    @classmethod
    def from_report(cls, report: MetricsReport) -> 'ResultRow':
        causes = dict(report.dropped_by_cause)
        return cls(
            protocol=report.protocol, node_count=report.node_count, seed=report.seed,
            sent=report.sent, delivered=report.delivered, dropped=report.dropped,
            in_flight_at_end=report.in_flight_at_end, pdr=report.pdr,
            throughput_pps=report.throughput_pps, throughput_bps=report.throughput_bps,
            mean_e2e_delay_s=report.mean_e2e_delay,
            dropped_by_cause=tuple((cause, causes.get(cause, 0)) for cause in DROP_CAUSES))

    @property
    def cell(self) -> Cell:
        return (self.protocol, self.node_count, self.seed)


@dataclass(frozen=True)
class MetricStats:
    mean: Optional[float]
    std: Optional[float]
    samples: int


@dataclass(frozen=True)
class CellSummary:
    """Mean and sample standard deviation over the seeds of one (protocol, node_count)."""

    protocol: str
    node_count: int
    runs: int
    pdr: MetricStats
    throughput_pps: MetricStats
    mean_e2e_delay_s: MetricStats


def _run_cell(config: SimConfig, protocol: str, trace_path: Optional[str]) -> MetricsReport:
    trace = TraceRecorder(path=trace_path) if trace_path else None
    return run(config, protocol, trace=trace)


def run_sweep(scenario: ScenarioFile, workers: Optional[int] = None,
              trace_dir: Optional[Path] = None) -> List[ResultRow]:
    """
    Runs every cell of the scenario; rows come back in cell order.

    Raises:
        InvariantViolation: a run broke an invariant; `cell` names it
    """
    cells = scenario.cells()
    jobs = []
    for protocol, node_count, seed in cells:
        trace_path = None
        if trace_dir is not None:
            trace_path = str(Path(trace_dir) / f"{protocol}_{node_count}_{seed}.jsonl")
        jobs.append((scenario.config_for(node_count, seed), protocol, trace_path))

    pool_size = get_environment_detector().sweep_workers(len(cells), workers)
    log_info(f"Sweep: {len(cells)} cells on {pool_size} worker(s)")
    reports: Dict[Cell, MetricsReport] = {}
    if pool_size == 1:
        for cell, job in zip(cells, jobs):
            reports[cell] = _checked(cell, lambda: _run_cell(*job))
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=pool_size) as executor:
            futures = {cell: executor.submit(_run_cell, *job) for cell, job in zip(cells, jobs)}
            for cell in cells:
                reports[cell] = _checked(cell, futures[cell].result)
    return [ResultRow.from_report(reports[cell]) for cell in cells]


def _checked(cell: Cell, call) -> MetricsReport:
    try:
        return call()
    except InvariantViolation as e:
        raise InvariantViolation(str(e), cell=cell) from e


def _stats(values: Sequence[Optional[float]]) -> MetricStats:
    present = np.array([v for v in values if v is not None], dtype=float)
    if present.size == 0:
        return MetricStats(None, None, 0)
    std = float(np.std(present, ddof=1)) if present.size > 1 else 0.0
    return MetricStats(float(np.mean(present)), std, int(present.size))


def summarize(rows: Sequence[ResultRow]) -> List[CellSummary]:
    """Per (protocol, node_count) statistics, ordered by protocol then node_count."""
    groups: Dict[Tuple[str, int], List[ResultRow]] = {}
    for row in rows:
        groups.setdefault((row.protocol, row.node_count), []).append(row)
    return [
        CellSummary(protocol, node_count, len(group),
                    pdr=_stats([r.pdr for r in group]),
                    throughput_pps=_stats([r.throughput_pps for r in group]),
                    mean_e2e_delay_s=_stats([r.mean_e2e_delay_s for r in group]))
        for (protocol, node_count), group in sorted(groups.items())
    ]


def delay_trend(summaries: Sequence[CellSummary]) -> Dict[str, Optional[float]]:
    """Spearman rank correlation of mean delay against node count, per protocol."""
    trends: Dict[str, Optional[float]] = {}
    for protocol in sorted({s.protocol for s in summaries}):
        points = [(s.node_count, s.mean_e2e_delay_s.mean) for s in summaries
                  if s.protocol == protocol and s.mean_e2e_delay_s.mean is not None]
        if len(points) < 2:
            trends[protocol] = None
            continue
        counts, delays = zip(*points)
        rho, _ = stats.spearmanr(counts, delays)
        trends[protocol] = None if rho is None or math.isnan(rho) else float(rho)
    return trends
