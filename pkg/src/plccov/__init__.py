"""Statement coverage assessment for IEC 61131-3 control software.

Pipeline: parse sources (:mod:`plccov.frontend`), build the dependency model
(:mod:`plccov.depmodel`), insert trace points (:mod:`plccov.instrument`), run
test suites on the scan-cycle interpreter (:mod:`plccov.runtime`,
:mod:`plccov.testkit`) and compute coverage (:mod:`plccov.coverage`).
"""

from .coverage import CoverageReport, CoverageStatus, coverage, find_untested, rollup, superimpose, was_visited
from .depmodel import DependencyModel, basic_blocks, build_model, reachable_pous
from .frontend import parse_project, pretty_print
from .instrument import (
    TracePointDatabase,
    emit_tp_database,
    instrument,
    load_tp_database,
    strip_instrumentation,
)
from .runtime import ScanConfig, init_state, run_cycle
from .testkit import load_suite, read_trace_file, run_suite, run_test_case

__version__ = "0.1.0"

__all__ = [
    "CoverageReport",
    "CoverageStatus",
    "DependencyModel",
    "ScanConfig",
    "TracePointDatabase",
    "basic_blocks",
    "build_model",
    "coverage",
    "emit_tp_database",
    "find_untested",
    "init_state",
    "instrument",
    "load_suite",
    "load_tp_database",
    "parse_project",
    "pretty_print",
    "reachable_pous",
    "read_trace_file",
    "rollup",
    "run_cycle",
    "run_suite",
    "run_test_case",
    "strip_instrumentation",
    "superimpose",
    "was_visited",
]
