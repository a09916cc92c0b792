"""
Sweep outputs: the results CSV, plot-data files and the console summary.

CSV columns are fixed (RESULT_COLUMNS). Floats are written with repr() so a
read-back recovers them exactly; undefined values (pdr with nothing sent,
delay with nothing delivered) are written as "null".
"""

import csv
import io
import os
import tempfile
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

from config.constants import CSV_FILENAME, PLOT_METRICS
from core.errors import ConfigError, OutputError
from services.metrics_collector import DROP_CAUSES
from services.sweep_service import CellSummary, MetricStats, ResultRow, delay_trend, summarize
from utils.logger import log_debug, log_info

NULL_MARKER = "null"

RESULT_COLUMNS = (
    'protocol', 'node_count', 'seed', 'sent', 'delivered', 'dropped', 'in_flight_at_end',
    'pdr', 'throughput_pps', 'throughput_bps', 'mean_e2e_delay_s',
) + tuple(f"dropped_{cause}" for cause in DROP_CAUSES)

_INT_COLUMNS = ('node_count', 'seed', 'sent', 'delivered', 'dropped', 'in_flight_at_end')

# plot file metric -> CellSummary attribute
_PLOT_FIELDS = {
    'pdr': 'pdr',
    'delay': 'mean_e2e_delay_s',
    'throughput': 'throughput_pps',
}


def prepare_output_dir(path: Union[str, Path]) -> Path:
    """
    Creates the output directory and checks it is writable.

    Called before any run starts.

    Raises:
        OutputError: the directory cannot be created or written
    """
    directory = Path(path)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        fd, scratch = tempfile.mkstemp(prefix='.writable-', dir=directory)
        os.close(fd)
        os.unlink(scratch)
    except OSError as e:
        raise OutputError(f"output directory {directory} is not writable: {e}")
    return directory


def _write_file_safely(file_path: Path, content: str) -> None:
    """Writes through a temp file in the same directory, then renames it into place."""
    try:
        fd, temp_path = tempfile.mkstemp(suffix='.tmp', dir=file_path.parent, text=True)
        try:
            with open(fd, 'w', encoding='utf-8', newline='') as f:
                f.write(content)
            os.replace(temp_path, file_path)
        except BaseException:
            if os.path.exists(temp_path):
                os.unlink(temp_path)
            raise
    except OSError as e:
        raise OutputError(f"cannot write {file_path}: {e}")
    log_debug(f"Wrote {file_path}")


def _format_value(value) -> str:
    if value is None:
        return NULL_MARKER
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_results_csv(rows: Sequence[ResultRow]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(RESULT_COLUMNS)
    for row in rows:
        causes = dict(row.dropped_by_cause)
        writer.writerow([
            row.protocol, row.node_count, row.seed, row.sent, row.delivered, row.dropped,
            row.in_flight_at_end,
            _format_value(row.pdr), _format_value(row.throughput_pps),
            _format_value(row.throughput_bps), _format_value(row.mean_e2e_delay_s),
        ] + [causes.get(cause, 0) for cause in DROP_CAUSES])
    return buffer.getvalue()


def _parse_optional_float(text: str) -> Optional[float]:
    return None if text == NULL_MARKER else float(text)


def read_results_csv(path: Union[str, Path]) -> List[ResultRow]:
    """
    Reads a results CSV written by write_results_csv.

    Raises:
        ConfigError: the header does not match RESULT_COLUMNS
    """
    with open(path, newline='', encoding='utf-8') as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != RESULT_COLUMNS:
            raise ConfigError(f"unexpected results header in {path}", field='csv')
        rows = []
        for record in reader:
            ints = {name: int(record[name]) for name in _INT_COLUMNS}
            rows.append(ResultRow(
                protocol=record['protocol'],
                pdr=_parse_optional_float(record['pdr']),
                throughput_pps=float(record['throughput_pps']),
                throughput_bps=float(record['throughput_bps']),
                mean_e2e_delay_s=_parse_optional_float(record['mean_e2e_delay_s']),
                dropped_by_cause=tuple((cause, int(record[f"dropped_{cause}"]))
                                       for cause in DROP_CAUSES),
                **ints))
    return rows


def write_results_csv(rows: Sequence[ResultRow], directory: Path) -> Path:
    path = Path(directory) / CSV_FILENAME
    _write_file_safely(path, format_results_csv(rows))
    return path


def format_plot_data(summaries: Sequence[CellSummary], metric: str) -> str:
    """
    Whitespace-separated columns: node_count, then the mean of `metric` per protocol.

    Missing means are written as "nan", which gnuplot and numpy.loadtxt both accept.
    """
    attribute = _PLOT_FIELDS[metric]
    protocols = sorted({s.protocol for s in summaries})
    node_counts = sorted({s.node_count for s in summaries})
    means: Dict[tuple, Optional[float]] = {
        (s.protocol, s.node_count): getattr(s, attribute).mean for s in summaries
    }
    lines = [f"# {metric}: mean over seeds", "# node_count " + " ".join(protocols)]
    for count in node_counts:
        cells = []
        for protocol in protocols:
            mean = means.get((protocol, count))
            cells.append("nan" if mean is None else repr(mean))
        lines.append(" ".join([str(count)] + cells))
    return "\n".join(lines) + "\n"


def write_plot_data(summaries: Sequence[CellSummary], directory: Path) -> List[Path]:
    paths = []
    for metric in PLOT_METRICS:
        path = Path(directory) / f"plot_{metric}.dat"
        _write_file_safely(path, format_plot_data(summaries, metric))
        paths.append(path)
    return paths


def _mean_std(stats: MetricStats, digits: int) -> str:
    if stats.mean is None:
        return NULL_MARKER
    return f"{stats.mean:.{digits}f} ± {stats.std:.{digits}f}"


def format_summary(summaries: Sequence[CellSummary],
                   trends: Optional[Dict[str, Optional[float]]] = None) -> str:
    """Console table of mean ± std per protocol and node count."""
    header = f"{'protocol':<16} {'nodes':>5} {'runs':>4}  {'pdr':>17}  {'throughput (pkt/s)':>21}  {'delay (s)':>19}"
    lines = [header, "-" * len(header)]
    for s in sorted(summaries, key=lambda s: (s.protocol, s.node_count)):
        lines.append(f"{s.protocol:<16} {s.node_count:>5} {s.runs:>4}  "
                     f"{_mean_std(s.pdr, 4):>17}  {_mean_std(s.throughput_pps, 3):>21}  "
                     f"{_mean_std(s.mean_e2e_delay_s, 4):>19}")
    for protocol, rho in sorted((trends or {}).items()):
        value = "n/a" if rho is None else f"{rho:+.3f}"
        lines.append(f"delay trend vs node count ({protocol}): spearman rho = {value}")
    return "\n".join(lines)


def emit_outputs(rows: Sequence[ResultRow], directory: Union[str, Path]) -> List[Path]:
    """Writes the CSV and plot-data files, prints the summary; returns the written paths."""
    directory = Path(directory)
    summaries = summarize(rows)
    paths = [write_results_csv(rows, directory)]
    paths.extend(write_plot_data(summaries, directory))
    print(format_summary(summaries, delay_trend(summaries)))
    log_info(f"Results written to {directory}")
    return paths
