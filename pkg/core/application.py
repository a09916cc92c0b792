"""
Command-line application for the NHDF CR-VANET simulator.
Parses flags, validates the scenario and output directory, runs the sweep
and maps failures onto exit codes.
"""

import argparse
import signal
import sys
from pathlib import Path
from typing import List, Optional

from .environment import get_environment_detector
from .errors import ConfigError, SimulationError
from .scenario import parse_scenario
from utils.logger import log_debug, log_error, log_info, set_verbosity
from config.constants import APP_NAME, APP_VERSION

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INTERRUPTED = 130


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='nhdf-sim',
        description=f"{APP_NAME}: sweeps NHDF and the greedy baseline over a scenario file.")
    parser.add_argument('scenario', type=Path, help="scenario YAML file")
    parser.add_argument('-o', '--output-dir', type=Path, default=Path('results'),
                        help="directory for results.csv and plot_*.dat (default: ./results)")
    parser.add_argument('--protocol', action='append', default=[], metavar='NAME',
                        help="run only this protocol (repeatable)")
    parser.add_argument('--seed', action='append', type=int, default=[], metavar='N',
                        help="replace the scenario seeds (repeatable)")
    parser.add_argument('--trace', action='store_true',
                        help="write one event-trace .jsonl per run into OUTPUT_DIR/traces")
    parser.add_argument('--workers', type=int, default=None, metavar='N',
                        help="worker processes for the sweep (default: sized from the host)")
    parser.add_argument('-v', '--verbose', action='count', default=0, help="more logging")
    parser.add_argument('-q', '--quiet', action='count', default=0, help="less logging")
    parser.add_argument('--version', action='version', version=f"%(prog)s {APP_VERSION}")
    return parser


class SimulatorApplication:
    """
    Runs one sweep from the command line.
    Everything that can be validated is validated before the first run starts.
    """

    def __init__(self, argv: Optional[List[str]] = None):
        self.argv = list(sys.argv[1:] if argv is None else argv)
        self.args = None

        signal.signal(signal.SIGINT, self._handle_signal)
        signal.signal(signal.SIGTERM, self._handle_signal)

    def run(self) -> int:
        """Parses flags, validates inputs, runs the sweep and writes the outputs."""
        self.args = build_parser().parse_args(self.argv)
        set_verbosity(self.args.verbose - self.args.quiet)
        log_info(f"Starting {APP_NAME} v{APP_VERSION}...")
        self._log_environment()

        # imported late so --help stays fast
        from services.results_writer import emit_outputs, prepare_output_dir
        from services.sweep_service import run_sweep

        scenario = parse_scenario(self.args.scenario)
        if self.args.protocol or self.args.seed:
            scenario = scenario.restricted(tuple(self.args.protocol), tuple(self.args.seed))
        if self.args.workers is not None and self.args.workers < 1:
            raise ConfigError("must be at least 1", field='workers')

        output_dir = prepare_output_dir(self.args.output_dir)
        trace_dir = prepare_output_dir(output_dir / 'traces') if self.args.trace else None

        rows = run_sweep(scenario, workers=self.args.workers, trace_dir=trace_dir)
        emit_outputs(rows, output_dir)
        return EXIT_OK

    def _log_environment(self):
        try:
            info = get_environment_detector().detect_all()
            log_debug("Host: {logical_cpus} logical / {physical_cpus} physical CPUs, "
                      "{available_memory} bytes free".format(**info))
        except Exception as e:
            log_debug(f"Host detection failed: {e}")

    def _handle_signal(self, signum, frame):
        """Turns SIGINT and SIGTERM into KeyboardInterrupt so the sweep unwinds."""
        log_info(f"Received signal {signum}, shutting down...")
        raise KeyboardInterrupt


def run_application(argv: Optional[List[str]] = None) -> int:
    """Runs the application and returns the process exit code."""
    try:
        return SimulatorApplication(argv).run()
    except KeyboardInterrupt:
        log_error("Interrupted")
        return EXIT_INTERRUPTED
    except SimulationError as e:
        log_error(type(e).__name__, e)
        return e.exit_code
    except Exception as e:
        log_error("Unexpected error", e)
        return EXIT_FAILURE
