"""Command line: graph, instrument, run, cover and estimate.

Exit codes: 0 success, 1 failing tests, 2 usage or parse errors, 3 inconsistent artifacts.
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
import time
from importlib import resources
from pathlib import Path

from . import overhead
from .coverage import CoverageError, coverage, emit_report, render_text
from .depmodel import block_statement_lines, build_model, to_dot
from .frontend import FrontendError, parse_project
from .instrument import (
    TRACE_FILE,
    DatabaseError,
    InstrumentationError,
    emit_tp_database,
    fingerprint,
    instrument,
    load_tp_database,
)
from .manifest import ManifestError, load_manifest
from .runtime import ScanConfig
from .testkit import (
    InteractiveResponder,
    SuiteError,
    TraceFileError,
    emit_suite,
    load_suite,
    read_trace_file,
    run_suite,
    scripted,
    write_reports,
)

OK, TESTS_FAILED, USAGE, INCONSISTENT = 0, 1, 2, 3


class Inconsistent(Exception):
    pass


def _out(args, default: Path) -> Path:
    return Path(args.output) if getattr(args, "output", None) else default


def cmd_graph(args) -> int:
    m = load_manifest(args.manifest)
    model = build_model(m.load_project())
    dest = _out(args, m.output / "graph.dot")
    dest.parent.mkdir(parents=True, exist_ok=True)
    dest.write_text(to_dot(model), encoding="utf-8")
    print(f"{len(model.nodes)} nodes, {len(model.edges)} edges -> {dest}")
    return OK


def cmd_instrument(args) -> int:
    m = load_manifest(args.manifest)
    t0 = time.perf_counter()
    project = m.load_project()
    model = build_model(project)
    ip, db = instrument(project, model)
    elapsed = time.perf_counter() - t0
    out = m.instrumented_dir
    if out.exists():
        shutil.rmtree(out)
    for path, text in ip.sources:
        dest = out / path
        dest.parent.mkdir(parents=True, exist_ok=True)
        dest.write_text(text, encoding="utf-8")
    emit_tp_database(db, m.database_path)
    steps = sum(p.kind == "step" for p in db.points)
    print(f"instrumented {len(db.points)} trace points ({len(db.points) - steps} blocks, {steps} steps)"
          f" in {elapsed:.3f} s -> {out}")  # fmt: skip
    return OK


def _instrumented_sources(m) -> list[tuple[str, str]]:
    out = m.instrumented_dir
    if not out.is_dir():
        raise Inconsistent(f"{out} not found; run 'instrument' first")
    names = [name for name, _ in m.source_texts()] + [TRACE_FILE]
    files = []
    for name in names:
        p = out / name
        if not p.is_file():
            raise Inconsistent(f"instrumented file {p} is missing")
        files.append((name, p.read_text(encoding="utf-8")))
    return files


def cmd_run(args) -> int:
    m = load_manifest(args.manifest)
    files = _instrumented_sources(m)
    db = load_tp_database(m.database_path)
    if fingerprint(files) != db.project_fingerprint:
        raise Inconsistent("instrumented sources do not match the trace-point database")
    project = parse_project(files, m.tasks)
    suite_path = Path(args.suite) if args.suite else m.suite
    if suite_path is None:
        raise SuiteError("no test suite given (use --suite or 'suite =' in the manifest)")
    suite = load_suite(suite_path, project)
    run_dir = Path(args.run_dir) if args.run_dir else m.output / "run"
    if run_dir.exists():
        shutil.rmtree(run_dir)
    interactive = args.interactive or m.interactive_manual
    responder = InteractiveResponder() if interactive else scripted
    verdicts, _ = run_suite(
        project, ScanConfig.for_project(project), suite, db, run_dir,
        no_reinit=args.no_reinit or m.no_reinit, responder=responder,
    )  # fmt: skip
    write_reports(verdicts, run_dir, db.project_fingerprint)
    if interactive:
        emit_suite(responder.replay_suite(suite), run_dir / "responses.xml")
    print((run_dir / "report.txt").read_text(encoding="utf-8"), end="")
    return OK if all(v.passed for v in verdicts) else TESTS_FAILED


def cmd_cover(args) -> int:
    m = load_manifest(args.manifest)
    project = m.load_project()
    model = build_model(project)
    db_path = Path(args.db) if args.db else m.database_path
    db = load_tp_database(db_path)
    _, expected = instrument(project, model)
    if expected.project_fingerprint != db.project_fingerprint or expected.points != db.points:
        raise Inconsistent(f"{db_path} was produced from different sources")
    traces = []
    for d in args.traces:
        d = Path(d)
        rep = d / "report.json"
        if not rep.is_file():
            raise Inconsistent(f"{rep} not found")
        if json.loads(rep.read_text(encoding="utf-8")).get("fingerprint") != db.project_fingerprint:
            raise Inconsistent(f"traces in {d} come from a differently instrumented project")
        for f in sorted(d.glob("*.trace")):
            traces.append(read_trace_file(f, db))
    report = coverage(model, traces, db)
    out = _out(args, m.output / "coverage")
    out.mkdir(parents=True, exist_ok=True)
    sources = dict(m.source_texts())
    lines = block_statement_lines(project, model)
    ext = {"text": "txt", "dot": "dot", "html": "html", "json": "json"}
    for fmt in args.format.split(","):
        fmt = fmt.strip()
        if fmt not in ext:
            raise SuiteError(f"unknown report format {fmt!r}")
        emit_report(report, model, fmt, out / f"coverage.{ext[fmt]}", sources, lines)
    print(render_text(report, model), end="")
    return OK


def cmd_estimate(args) -> int:
    table_c = overhead.GRID_COST_US
    measured_c = overhead.calibrate(overhead.MEASURED_DELTA_MS, overhead.MEASURED_CALLS)
    if args.table2:
        grid = overhead.reproduce_table2(args.cost if args.cost is not None else table_c)
        print(overhead.grid_csv(grid) if args.csv else overhead.grid_text(grid), end="")
    else:
        if args.calls is None or args.cycle is None:
            raise SuiteError("estimate needs --calls and --cycle, or --table2")
        cost = args.cost if args.cost is not None else table_c
        est = overhead.estimate(args.calls, args.cycle, cost, args.headroom)
        if args.csv:
            print("calls,cycle_ms,cost_us,percent,absolute_us,within_headroom")
            print(f"{args.calls},{args.cycle},{cost},{est.percent:.4f},{est.absolute_time:.4f},{est.within_headroom}")
        else:
            print(f"{args.calls} calls x {cost} us in a {args.cycle} ms cycle: {est.percent:.2f}% "
                  f"({est.absolute_time:.1f} us), within {args.headroom:.0%} headroom: {est.within_headroom}")  # fmt: skip
    if not args.csv:
        print(f"per-call cost implied by the reference grid: {table_c:.4f} us")
        print(f"per-call cost from {overhead.MEASURED_DELTA_MS} ms / {overhead.MEASURED_CALLS} calls: {measured_c:.4f} us")
    return OK


def cmd_demo(args) -> int:
    dest = Path(args.directory)
    dest.mkdir(parents=True, exist_ok=True)
    for entry in resources.files("plccov.demo").iterdir():
        if entry.name.endswith((".st", ".ini", ".xml")):
            (dest / entry.name).write_bytes(entry.read_bytes())
    print(f"demo project copied to {dest}")
    return OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="plccov", description="Statement coverage for IEC 61131-3 control software")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("graph", help="write the dependency model as DOT")
    p.add_argument("manifest")
    p.add_argument("-o", "--output")
    p.set_defaults(fn=cmd_graph)

    p = sub.add_parser("instrument", help="insert trace points and write the trace-point database")
    p.add_argument("manifest")
    p.set_defaults(fn=cmd_instrument)

    p = sub.add_parser("run", help="run a test suite on the instrumented project")
    p.add_argument("manifest")
    p.add_argument("--suite")
    p.add_argument("--run-dir")
    p.add_argument("--no-reinit", action="store_true", help="initialise once instead of before every test")
    p.add_argument("--interactive", action="store_true", help="answer manual steps on the terminal")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("cover", help="compute coverage from trace directories")
    p.add_argument("manifest")
    p.add_argument("--traces", nargs="+", required=True)
    p.add_argument("--db")
    p.add_argument("--format", default="text,dot,html,json")
    p.add_argument("-o", "--output")
    p.set_defaults(fn=cmd_cover)

    p = sub.add_parser("estimate", help="tracing overhead per scan cycle")
    p.add_argument("--calls", type=int)
    p.add_argument("--cycle", type=float, help="scan cycle time in ms")
    p.add_argument("--cost", type=float, help="per-call cost in microseconds")
    p.add_argument("--headroom", type=float, default=overhead.DEFAULT_HEADROOM)
    p.add_argument("--table2", action="store_true", help="print the overhead grid for the reference call counts and cycle times")
    p.add_argument("--csv", action="store_true")
    p.set_defaults(fn=cmd_estimate)

    p = sub.add_parser("demo", help="copy the demo project into a directory")
    p.add_argument("directory")
    p.set_defaults(fn=cmd_demo)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return USAGE if exc.code else OK
    try:
        return args.fn(args)
    except (Inconsistent, InstrumentationError, DatabaseError, CoverageError, TraceFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return INCONSISTENT
    except (ManifestError, FrontendError, SuiteError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
