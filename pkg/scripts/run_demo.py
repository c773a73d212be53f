"""Run the whole pipeline on the bundled demo project.

    python scripts/run_demo.py [workdir]

Copies the demo, instruments it, runs the main suite, reports coverage, then
adds the supplementary suite and reports again.
"""

from __future__ import annotations

import argparse
import json
import sys
import tempfile
from pathlib import Path

from plccov.cli import OK, TESTS_FAILED, main


def step(*argv: str) -> int:
    print(f"$ plccov {' '.join(argv)}")
    rc = main(list(argv))
    print()
    return rc


def run(workdir: Path) -> int:
    manifest = str(workdir / "demo.ini")
    out = workdir / "out"
    for argv in (("demo", str(workdir)), ("graph", manifest), ("instrument", manifest)):
        if step(*argv) != OK:
            return 1
    if step("run", manifest) not in (OK, TESTS_FAILED):
        return 1
    step("cover", manifest, "--traces", str(out / "run"), "-o", str(out / "coverage_main"))
    supp = str(workdir / "supplementary.xml")
    step("run", manifest, "--suite", supp, "--run-dir", str(out / "run_supp"))
    step("cover", manifest, "--traces", str(out / "run"), str(out / "run_supp"), "-o", str(out / "coverage_all"))

    before = json.loads((out / "coverage_main" / "coverage.json").read_text())
    after = json.loads((out / "coverage_all" / "coverage.json").read_text())
    print("findings with the main suite:")
    for f in before["untested"]:
        print(f"  {f['kind']:<10} {f['name']}")
    print(f"findings with the supplementary tests added: {len(after['untested'])}")
    print(f"artifacts in {out}")
    return 0


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("workdir", nargs="?")
    args = ap.parse_args()
    if args.workdir:
        sys.exit(run(Path(args.workdir)))
    with tempfile.TemporaryDirectory() as tmp:
        sys.exit(run(Path(tmp) / "demo"))
