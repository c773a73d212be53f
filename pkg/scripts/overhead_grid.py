"""Tracing overhead per scan cycle for the reference call counts and cycle times.

Prints the percentage grid for both per-call cost constants, the deviation of
each from the reference values and the call budget left under the headroom rule.
"""

from __future__ import annotations

import argparse

from plccov import overhead as oh


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--budget", type=float, default=0.05, help="share of the cycle granted to tracing")
    args = ap.parse_args()

    measured = oh.calibrate(oh.MEASURED_DELTA_MS, oh.MEASURED_CALLS)
    for label, cost in (("grid constant", oh.GRID_COST_US), ("measured constant", measured)):
        print(f"{label}: {cost:.4f} us per call")
        print(oh.grid_text(oh.reproduce_table2(cost)), end="")
        print(f"max deviation from the reference grid: {oh.grid_deviation(cost):.4f} points\n")

    est = oh.estimate(oh.MEASURED_CALLS, 10, measured)
    print(f"{oh.MEASURED_CALLS} calls in a 10 ms cycle: {est.percent:.2f}% ({est.absolute_time:.0f} us)")
    for t in oh.GRID_CYCLES_MS:
        n = oh.max_trace_calls(t, oh.GRID_COST_US, args.budget)
        print(f"calls fitting in {args.budget:.0%} of a {t} ms cycle: {n}")


if __name__ == "__main__":
    main()
