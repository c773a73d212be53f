from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plccov.depmodel import build_model
from plccov.instrument import instrument
from plccov.runtime import ScanConfig, format_trace
from plccov.testkit import (
    ExecutionTrace,
    ExpectOutputs,
    InteractiveResponder,
    ManualStep,
    SetInputs,
    SuiteError,
    TestCase as Case,
    TraceFileError,
    WaitCycles,
    load_suite,
    parse_suite,
    parse_trace_text,
    read_trace_file,
    report_json,
    report_text,
    run_suite,
    run_test_case,
    suite_to_xml,
    write_reports,
    write_trace_file,
)

from conftest import DEMO_DIR, project_from


@pytest.fixture(scope="module")
def demo_instrumented(demo_project):
    ip, db = instrument(demo_project, build_model(demo_project))
    return ip.base, db


@pytest.fixture(scope="module")
def demo_suite(demo_instrumented):
    return load_suite(DEMO_DIR / "suite.xml", demo_instrumented[0])


def case(*steps, tid="X1"):
    return Case(tid, "adhoc", tuple(steps))


class TestSuiteFiles:
    def test_demo_suite_loads(self, demo_suite):
        assert [t.id for t in demo_suite] == [f"T{k:02d}" for k in range(1, 15)]
        assert sum(isinstance(s, ManualStep) for t in demo_suite for s in t.steps) >= 3

    def test_round_trip(self, demo_suite):
        assert parse_suite(suite_to_xml(demo_suite)) == demo_suite

    @pytest.mark.parametrize(
        "xml",
        [
            "<suite><test id='a'/></suite>",
            "<suite><test id='a'><wait cycles='1'/></test><test id='a'><wait cycles='1'/></test></suite>",
            "<suite><test id='a'><jump/></test></suite>",
            "<suite><test id='a'><wait cycles='-1'/></test></suite>",
            "<suite><test id='a'><manual prompt='p' response='maybe'/></test></suite>",
            "<suite><test id='a'><set var='x'/></test></suite>",
            "<tests/>",
            "<suite",
        ],
    )
    def test_malformed(self, xml):
        with pytest.raises(SuiteError):
            parse_suite(xml)

    @pytest.mark.parametrize(
        "step",
        [
            "<set var='q_mode' value='1'/>",  # an output cannot be set
            "<expect var='i_start' value='TRUE'/>",  # an input cannot be checked
            "<set var='g_mode' value='1'/>",  # an internal variable is neither
            "<set var='i_start' value='banana'/>",
        ],
    )
    def test_validation_against_project(self, demo_project, step):
        with pytest.raises(SuiteError):
            parse_suite(f"<suite><test id='a'>{step}</test></suite>", demo_project)

    def test_names_are_case_insensitive(self, demo_project):
        (t,) = parse_suite("<suite><test id='a'><set var='I_START' value='true'/></test></suite>", demo_project)
        assert t.steps == (SetInputs((("I_START", "true"),)),)


class TestTraceFiles:
    def test_parse(self):
        tr = parse_trace_text("42:true, 43:true, 44:false, 45:false")
        assert tr.visited() == {42, 43}
        assert list(tr.visits) == [42, 43, 44, 45]

    @pytest.mark.parametrize("text", ["1:yes", "a:true", "1:true,2:false", "1:true, 1:false", "1=true"])
    def test_malformed(self, text):
        with pytest.raises(TraceFileError):
            parse_trace_text(text)

    def test_checked_against_database(self, demo_instrumented):
        _, db = demo_instrumented
        full = {i: False for i in db.ids}
        assert parse_trace_text(format_trace(full), db).visited() == set()
        with pytest.raises(TraceFileError):
            parse_trace_text(format_trace({**full, 999: True}), db)
        del full[3]
        with pytest.raises(TraceFileError):
            parse_trace_text(format_trace(full), db)

    @given(st.dictionaries(st.integers(0, 500), st.booleans()))
    @settings(max_examples=50)
    def test_round_trip(self, tmp_path_factory, visits):
        path = tmp_path_factory.mktemp("tr") / "T1.trace"
        write_trace_file(ExecutionTrace("T1", visits), path)
        back = read_trace_file(path)
        assert back.test_id == "T1"
        assert back.visits == dict(sorted(visits.items()))


class TestExecution:
    def test_demo_suite_all_pass(self, demo_instrumented, demo_suite, tmp_path):
        project, db = demo_instrumented
        verdicts, traces = run_suite(project, None, demo_suite, db, tmp_path)
        assert [v.outcome for v in verdicts] == ["Passed"] * 14
        assert sorted(p.name for p in tmp_path.glob("*.trace")) == [f"T{k:02d}.trace" for k in range(1, 15)]
        for t in traces:
            assert set(t.visits) == set(db.ids)
            assert read_trace_file(tmp_path / f"{t.test_id}.trace", db) == t

    def test_failed_expectation_reports_step(self, demo_instrumented):
        project, db = demo_instrumented
        t = case(SetInputs((("i_start", "TRUE"),)), WaitCycles(2), ExpectOutputs((("q_mode", "2"),)))
        v, trace = run_test_case(project, None, t, db)
        assert (v.outcome, v.step, v.expected, v.actual) == ("Failed", 2, "q_mode=2", "q_mode=1")
        assert trace.visited()  # a failing test still yields its trace

    def test_time_output_is_formatted(self, demo_instrumented):
        project, db = demo_instrumented
        t = case(WaitCycles(12), ExpectOutputs((("q_uptime", "T#1s"),)))
        v, _ = run_test_case(project, None, t, db)
        assert v.actual == "q_uptime=T#100ms"  # the 100 ms task last ran at t = 100

    def test_manual_fail(self, demo_instrumented):
        project, db = demo_instrumented
        v, _ = run_test_case(project, None, case(ManualStep("lamp on?", "fail")), db)
        assert (v.outcome, v.step, v.actual) == ("Failed", 0, "fail")

    def test_manual_values_are_applied(self, demo_instrumented):
        project, db = demo_instrumented
        t = case(ManualStep("press start", "ok", (("i_start", "TRUE"),)), WaitCycles(2), ExpectOutputs((("q_mode", "1"),)))
        assert run_test_case(project, None, t, db)[0].passed

    def test_fault_gives_error_and_trace(self):
        p = project_from("""
VAR_GLOBAL
    d AT %I* : INT;
    q AT %Q* : INT;
END_VAR
PROGRAM P
IF d = 0 THEN
    q := 1;
END_IF;
q := 10 / d;
END_PROGRAM
TASK T (INTERVAL := T#10ms, PRIORITY := 1) : P;
""")
        ip, db = instrument(p, build_model(p))
        v, trace = run_test_case(ip.base, None, case(WaitCycles(1)), db)
        assert v.outcome == "Error" and "zero" in v.message.lower()
        assert trace.visited() == {0, 1, 2}  # the probe precedes the faulting statement

    def test_reset_between_tests(self, demo_instrumented, demo_suite):
        project, db = demo_instrumented
        _, alone = run_test_case(project, None, demo_suite[1], db)
        _, traces = run_suite(project, None, demo_suite[:2], db)
        assert traces[1] == alone

    def test_no_reinit_carries_state(self, demo_instrumented, demo_suite):
        project, db = demo_instrumented
        verdicts, _ = run_suite(project, None, demo_suite, db, no_reinit=True)
        assert not all(v.passed for v in verdicts)

    def test_deterministic(self, demo_instrumented, demo_suite):
        project, db = demo_instrumented
        a = run_suite(project, ScanConfig.for_project(project), demo_suite, db)
        b = run_suite(project, ScanConfig.for_project(project), demo_suite, db)
        assert a == b

    def test_interactive_responder_replay(self, demo_instrumented, demo_suite):
        project, db = demo_instrumented
        said = []
        responder = InteractiveResponder(ask=lambda _: "f", tell=said.append)
        verdicts, _ = run_suite(project, None, demo_suite, db, responder=responder)
        manual_tests = {t.id for t in demo_suite if any(isinstance(s, ManualStep) for s in t.steps)}
        assert {v.test_id for v in verdicts if not v.passed} == manual_tests
        assert len(said) == len(manual_tests)
        replay = responder.replay_suite(demo_suite)
        again, _ = run_suite(project, None, replay, db)
        assert [v.outcome for v in again] == [v.outcome for v in verdicts]


class TestReports:
    def test_text_and_json(self, demo_instrumented, tmp_path):
        project, db = demo_instrumented
        t = case(SetInputs((("i_start", "TRUE"),)), WaitCycles(2), ExpectOutputs((("q_mode", "3"),)))
        v, _ = run_test_case(project, None, t, db)
        text = report_text([v])
        assert "X1: Failed at step 2 (expected q_mode=3, actual q_mode=1) -> X1.trace" in text
        assert text.endswith("1 tests: 0 passed, 1 failed, 0 errors\n")
        doc = json.loads(report_json([v], "abc"))
        assert doc["fingerprint"] == "abc" and doc["summary"]["Failed"] == 1
        write_reports([v], tmp_path, "abc")
        assert (tmp_path / "report.txt").read_text() == text
