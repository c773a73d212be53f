from __future__ import annotations

import json
import re
from pathlib import Path

import pytest

from plccov.cli import INCONSISTENT, OK, TESTS_FAILED, USAGE, main
from plccov.depmodel import build_model
from plccov.manifest import load_manifest
from plccov.testkit import read_trace_file


def pipeline(manifest: Path, *extra_runs: tuple[str, str]) -> Path:
    """instrument -> run -> cover on a demo copy; returns the output directory."""
    out = manifest.parent / "out"
    assert main(["graph", str(manifest)]) == OK
    assert main(["instrument", str(manifest)]) == OK
    assert main(["run", str(manifest)]) == OK
    dirs = [str(out / "run")]
    for suite, run_dir in extra_runs:
        assert main(["run", str(manifest), "--suite", str(manifest.parent / suite), "--run-dir", str(out / run_dir)]) == OK
        dirs.append(str(out / run_dir))
    assert main(["cover", str(manifest), "--traces", *dirs]) == OK
    return out


def artifacts(root: Path) -> dict[str, bytes]:
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


class TestGraph:
    def test_dot_matches_model(self, demo_copy, capsys):
        assert main(["graph", str(demo_copy)]) == OK
        dot = (demo_copy.parent / "out" / "graph.dot").read_text()
        model = build_model(load_manifest(demo_copy).load_project())
        assert dot.count("kind=") == len(model.nodes) + len(model.edges)
        assert "OldCalibration" not in dot
        assert '"task:Control"' in dot and '"pou:Main"' in dot
        assert f"{len(model.nodes)} nodes" in capsys.readouterr().out

    def test_parse_error_exit_code(self, demo_copy, capsys):
        (demo_copy.parent / "util.st").write_text("FUNCTION_BLOCK Broken\nx := ;\nEND_FUNCTION_BLOCK\n")
        assert main(["graph", str(demo_copy)]) == USAGE
        assert "util.st" in capsys.readouterr().err

    def test_missing_manifest(self, tmp_path):
        assert main(["graph", str(tmp_path / "none.ini")]) == USAGE


class TestInstrument:
    def test_summary_and_files(self, demo_copy, capsys):
        assert main(["instrument", str(demo_copy)]) == OK
        line = capsys.readouterr().out
        assert re.match(r"instrumented 105 trace points \(91 blocks, 14 steps\) in \d+\.\d{3} s", line)
        out = demo_copy.parent / "out"
        assert (out / "tracepoints.xml").is_file()
        assert sorted(p.name for p in (out / "instrumented").iterdir()) == sorted(
            ["globals.st", "util.st", "modes.st", "sequences.st", "hmi.st", "main.st", "__tracing__.st"]
        )

    def test_rerun_on_instrumented_output_is_rejected(self, demo_copy, capsys):
        assert main(["instrument", str(demo_copy)]) == OK
        inst = demo_copy.parent / "out" / "instrumented"
        text = demo_copy.read_text().replace(
            "sources = globals.st, util.st, modes.st, sequences.st, hmi.st, main.st",
            "sources = " + ", ".join(f"out/instrumented/{n}" for n in
                                     ("globals.st", "util.st", "modes.st", "sequences.st", "hmi.st", "main.st", "__tracing__.st")),
        ).replace("output = out", "output = out2")  # fmt: skip
        again = demo_copy.parent / "again.ini"
        again.write_text(text)
        assert inst.is_dir()
        assert main(["instrument", str(again)]) == INCONSISTENT
        assert "instrument" in capsys.readouterr().err

    def test_empty_project(self, tmp_path, capsys):
        (tmp_path / "p.st").write_text("PROGRAM P\nEND_PROGRAM\n")
        (tmp_path / "p.ini").write_text("[project]\nsources = p.st\n[task T]\ncycle_time = T#10ms\nentry = P\n")
        assert main(["instrument", str(tmp_path / "p.ini")]) == OK
        assert "instrumented 0 trace points" in capsys.readouterr().out


class TestRun:
    def test_demo_suite(self, demo_copy, capsys):
        assert main(["instrument", str(demo_copy)]) == OK
        assert main(["run", str(demo_copy)]) == OK
        run = demo_copy.parent / "out" / "run"
        assert len(list(run.glob("*.trace"))) == 14
        assert "14 tests: 14 passed, 0 failed, 0 errors" in capsys.readouterr().out
        assert json.loads((run / "report.json").read_text())["summary"]["Passed"] == 14

    def test_failing_suite_exit_code(self, demo_copy):
        assert main(["instrument", str(demo_copy)]) == OK
        bad = demo_copy.parent / "bad.xml"
        bad.write_text('<suite><test id="B1"><wait cycles="1"/><expect var="q_mode" value="3"/></test></suite>')
        assert main(["run", str(demo_copy), "--suite", str(bad)]) == TESTS_FAILED

    def test_empty_suite(self, demo_copy, capsys):
        assert main(["instrument", str(demo_copy)]) == OK
        empty = demo_copy.parent / "empty.xml"
        empty.write_text("<suite/>")
        assert main(["run", str(demo_copy), "--suite", str(empty)]) == OK
        assert "0 tests" in capsys.readouterr().out

    def test_no_reinit_flag(self, demo_copy):
        assert main(["instrument", str(demo_copy)]) == OK
        assert main(["run", str(demo_copy), "--no-reinit"]) == TESTS_FAILED

    def test_requires_instrumentation(self, demo_copy):
        assert main(["run", str(demo_copy)]) == INCONSISTENT

    def test_tampered_instrumented_source(self, demo_copy):
        assert main(["instrument", str(demo_copy)]) == OK
        f = demo_copy.parent / "out" / "instrumented" / "util.st"
        f.write_text(f.read_text() + "\n")
        assert main(["run", str(demo_copy)]) == INCONSISTENT

    def test_interactive_answers_are_saved(self, demo_copy, monkeypatch, capsys):
        assert main(["instrument", str(demo_copy)]) == OK
        monkeypatch.setattr("builtins.input", lambda _: "ok")
        assert main(["run", str(demo_copy), "--interactive"]) == OK
        assert (demo_copy.parent / "out" / "run" / "responses.xml").is_file()


class TestCover:
    def test_findings_then_none(self, demo_copy, capsys):
        out = pipeline(demo_copy)
        text = capsys.readouterr().out
        head = text[text.index("Untested code") :]
        assert head.startswith("Untested code (3 findings)")
        assert "CycleMonitor#5" in head and "LiftSeq.TrayFeed" in head and "LiftSeq.TrayEject" in head
        for ext in ("txt", "dot", "html", "json"):
            assert (out / "coverage" / f"coverage.{ext}").is_file()
        assert main(["run", str(demo_copy), "--suite", str(demo_copy.parent / "supplementary.xml"),
                     "--run-dir", str(out / "supp")]) == OK  # fmt: skip
        capsys.readouterr()
        assert main(["cover", str(demo_copy), "--traces", str(out / "run"), str(out / "supp")]) == OK
        assert "Untested code (0 findings)" in capsys.readouterr().out

    def test_json_totals_match_recount(self, demo_copy):
        out = pipeline(demo_copy)
        doc = json.loads((out / "coverage" / "coverage.json").read_text())
        visited = set()
        for f in sorted((out / "run").glob("*.trace")):
            pairs = [p.split(":") for p in f.read_text().split(", ")]
            visited |= {int(k) for k, v in pairs if v == "true"}
            assert doc["per_test_counts"][f.stem] == sum(v == "true" for _, v in pairs)
        assert doc["totals"]["points"]["visited"] == len(visited)
        assert doc["totals"]["points"]["total"] == 105
        assert sorted(doc["visited_points"]) == sorted(visited)

    def test_refuses_foreign_traces(self, demo_copy, tmp_path):
        out = pipeline(demo_copy)
        rep = out / "run" / "report.json"
        doc = json.loads(rep.read_text())
        doc["fingerprint"] = "0" * 64
        rep.write_text(json.dumps(doc))
        assert main(["cover", str(demo_copy), "--traces", str(out / "run")]) == INCONSISTENT

    def test_refuses_database_from_other_sources(self, demo_copy):
        out = pipeline(demo_copy)
        util = demo_copy.parent / "util.st"
        util.write_text(util.read_text().replace("IF pct > 100 THEN", "IF pct > 101 THEN"))
        assert main(["cover", str(demo_copy), "--traces", str(out / "run")]) == INCONSISTENT

    def test_truncated_trace_file(self, demo_copy):
        out = pipeline(demo_copy)
        t = out / "run" / "T01.trace"
        t.write_text(t.read_text().rsplit(", ", 1)[0])
        assert main(["cover", str(demo_copy), "--traces", str(out / "run")]) == INCONSISTENT

    def test_single_format(self, demo_copy):
        out = pipeline(demo_copy)
        dest = demo_copy.parent / "only"
        assert main(["cover", str(demo_copy), "--traces", str(out / "run"), "--format", "json", "-o", str(dest)]) == OK
        assert [p.name for p in dest.iterdir()] == ["coverage.json"]
        assert main(["cover", str(demo_copy), "--traces", str(out / "run"), "--format", "pdf"]) == USAGE


class TestEstimate:
    def test_table2_csv(self, capsys):
        assert main(["estimate", "--table2", "--csv"]) == OK
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 8 and len(lines[1:]) == 7
        assert lines[-1] == "1000,5.44,10.89,54.43"

    def test_table2_text_prints_both_constants(self, capsys):
        assert main(["estimate", "--table2"]) == OK
        text = capsys.readouterr().out
        assert "0.5443" in text and "0.6582" in text

    def test_zero_calls(self, capsys):
        assert main(["estimate", "--calls", "0", "--cycle", "10"]) == OK
        assert "0.00%" in capsys.readouterr().out

    def test_custom(self, capsys):
        assert main(["estimate", "--calls", "395", "--cycle", "10", "--cost", "0.658", "--csv"]) == OK
        row = capsys.readouterr().out.strip().splitlines()[1].split(",")
        assert float(row[3]) == pytest.approx(2.5991, abs=1e-4)

    def test_bad_params(self):
        assert main(["estimate", "--calls", "10"]) == USAGE
        assert main(["estimate", "--calls", "-1", "--cycle", "10"]) == USAGE
        assert main(["estimate", "--calls", "1", "--cycle", "0"]) == USAGE


def test_usage_errors():
    assert main([]) == USAGE
    assert main(["frobnicate"]) == USAGE


def test_end_to_end_determinism(tmp_path):
    roots = []
    for k in range(2):
        assert main(["demo", str(tmp_path / f"d{k}")]) == OK
        manifest = tmp_path / f"d{k}" / "demo.ini"
        roots.append(pipeline(manifest, ("supplementary.xml", "run_supp")))
    a, b = artifacts(roots[0]), artifacts(roots[1])
    assert a.keys() == b.keys()
    assert a == b
    assert sum(k.endswith(".trace") for k in a) == 16


def test_trace_files_parse_against_database(demo_copy):
    from plccov.instrument import load_tp_database

    out = pipeline(demo_copy)
    db = load_tp_database(out / "tracepoints.xml")
    for f in (out / "run").glob("*.trace"):
        assert set(read_trace_file(f, db).visits) == set(db.ids)
