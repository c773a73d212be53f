"""Run original and instrumented versions of random projects side by side.

For every generated project the per-cycle output images must agree, and the
points set in the trace array must equal the blocks seen in the statement log
of the uninstrumented run.
"""

from __future__ import annotations

import argparse
import random
import sys
import time

from plccov.depmodel import build_model
from plccov.instrument import instrument, strip_instrumentation
from plccov.randprog import generate_project, random_inputs
from plccov.runtime import init_state, run_cycle, visited_from_log


def check(seed: int, cycles: int) -> tuple[int, int, str | None]:
    p = generate_project(seed)
    ip, db = instrument(p, build_model(p))
    if strip_instrumentation(ip) != p:
        return len(db.points), 0, "erasure"
    orig, inst = init_state(p), init_state(ip.base)
    rng = random.Random(seed)
    for cycle in range(cycles):
        inputs = random_inputs(p, rng)
        if run_cycle(orig, inputs)[1] != run_cycle(inst, inputs)[1]:
            return len(db.points), 0, f"outputs differ in cycle {cycle}"
    traced = {i for i, v in enumerate(inst.tpa) if v}
    if traced != visited_from_log(orig, db):
        return len(db.points), len(traced), "visited sets differ"
    return len(db.points), len(traced), None


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--projects", type=int, default=200)
    ap.add_argument("--cycles", type=int, default=1000)
    ap.add_argument("--first-seed", type=int, default=0)
    args = ap.parse_args()
    t0 = time.perf_counter()
    failures = points = visited = 0
    for seed in range(args.first_seed, args.first_seed + args.projects):
        n, v, problem = check(seed, args.cycles)
        points, visited = points + n, visited + v
        if problem:
            failures += 1
            print(f"seed {seed}: {problem}")
    print(f"{args.projects} projects x {args.cycles} cycles: {failures} failures, "
          f"{visited} of {points} trace points visited, {time.perf_counter() - t0:.1f} s")  # fmt: skip
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
