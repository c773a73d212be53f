"""Analytic model of the scan-cycle time consumed by trace calls.

With ``n`` recorder calls per cycle costing ``c`` microseconds each, tracing
takes ``n * c`` microseconds of a ``T`` millisecond cycle, i.e. the fraction
``n * c / (1000 * T)``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

GRID_CALLS = (10, 50, 100, 200, 300, 400, 1000)
GRID_CYCLES_MS = (10, 5, 1)
# reference grid, in percent of the scan cycle
REFERENCE_GRID = (
    (0.05, 0.11, 0.54),
    (0.27, 0.54, 2.72),
    (0.54, 1.09, 5.44),
    (1.09, 2.18, 10.89),
    (1.63, 3.27, 16.33),
    (2.18, 4.35, 21.77),
    (5.44, 10.89, 54.43),
)
GRID_COST_US = 0.5443  # per-call cost that reproduces the reference grid
MEASURED_DELTA_MS = 0.26  # mean cycle-time increase measured with tracing
MEASURED_CALLS = 395  # mean recorder calls per cycle
DEFAULT_HEADROOM = 0.80  # share of the cycle that application plus tracing may use
# relative growth of the mean and of the maximum cycle time when I/O is recorded
# for guided testing; a separate write path, kept as fixed figures outside the model
GUIDED_TESTING_MEAN_INCREASE = 0.47
GUIDED_TESTING_MAX_INCREASE = 0.10


@dataclass(frozen=True)
class OverheadParams:
    per_call_cost: float  # microseconds
    calls_per_cycle: int
    cycle_time: float  # milliseconds
    headroom_fraction: float = DEFAULT_HEADROOM

    def __post_init__(self):
        if self.per_call_cost <= 0:
            raise ValueError("per-call cost must be positive")
        if self.calls_per_cycle < 0:
            raise ValueError("call count must be non-negative")
        if self.cycle_time <= 0:
            raise ValueError("cycle time must be positive")
        if not 0 < self.headroom_fraction <= 1:
            raise ValueError("headroom must lie in (0, 1]")


@dataclass(frozen=True)
class OverheadEstimate:
    percent_of_cycle: float  # a ratio: 0.0544 means 5.44 % of the cycle
    absolute_time: float  # microseconds per cycle
    within_headroom: bool

    @property
    def percent(self) -> float:
        return 100.0 * self.percent_of_cycle


def calibrate(delta_cycle_time_ms: float, calls_per_cycle: int) -> float:
    """Per-call cost in microseconds from a measured cycle-time increase."""
    if calls_per_cycle <= 0:
        raise ValueError("calibration needs at least one call per cycle")
    if delta_cycle_time_ms < 0:
        raise ValueError("cycle-time increase must be non-negative")
    return delta_cycle_time_ms * 1000.0 / calls_per_cycle


def estimate(
    n: int, cycle_ms: float, cost_us: float, headroom: float = DEFAULT_HEADROOM, application_share: float = 0.0
) -> OverheadEstimate:
    """Tracing share of one cycle.

    ``within_headroom`` tells whether the application share (supplied by the
    caller, default 0) plus tracing stays below ``headroom``.
    """
    if n < 0 or cycle_ms <= 0 or cost_us < 0:
        raise ValueError("need n >= 0, cycle time > 0 and cost >= 0")
    absolute = n * cost_us
    fraction = absolute / (1000.0 * cycle_ms)
    return OverheadEstimate(fraction, absolute, application_share + fraction <= headroom)


def reproduce_table2(cost_us: float = GRID_COST_US) -> list[list[float]]:
    """7x3 grid of percentages for the reference call counts and cycle times."""
    return [[estimate(n, t, cost_us).percent for t in GRID_CYCLES_MS] for n in GRID_CALLS]


def grid_deviation(cost_us: float = GRID_COST_US) -> float:
    """Largest absolute difference, in percentage points, against the reference grid."""
    grid = reproduce_table2(cost_us)
    return max(abs(a - b) for row, pub in zip(grid, REFERENCE_GRID) for a, b in zip(row, pub))


def max_trace_calls(cycle_ms: float, cost_us: float, budget_fraction: float) -> int:
    """Largest call count whose tracing time fits in ``budget_fraction`` of the cycle."""
    if cost_us <= 0 or cycle_ms <= 0 or budget_fraction < 0:
        raise ValueError("need cost > 0, cycle time > 0 and budget >= 0")
    exact = budget_fraction * 1000.0 * cycle_ms / cost_us
    n = math.floor(exact + 1e-9)  # guard against 0.1-style representation error
    while n > 0 and estimate(n, cycle_ms, cost_us).percent_of_cycle > budget_fraction:
        n -= 1
    return n


def grid_text(grid: list[list[float]]) -> str:
    head = f"{'calls/cycle':>12}" + "".join(f"{f'{t}ms':>10}" for t in GRID_CYCLES_MS)
    rows = [head]
    for n, row in zip(GRID_CALLS, grid):
        rows.append(f"{n:>12}" + "".join(f"{v:>9.2f}%" for v in row))
    return "\n".join(rows) + "\n"


def grid_csv(grid: list[list[float]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["calls_per_cycle"] + [f"{t}ms" for t in GRID_CYCLES_MS])
    for n, row in zip(GRID_CALLS, grid):
        w.writerow([n] + [f"{v:.2f}" for v in row])
    return buf.getvalue()
