"""Test suites, semi-automatic execution against the interpreter, traces and reports.

Every test runs as: reset the trace array, execute the steps cycle by cycle,
start the save of the trace array, keep cycling until the save is done and read
the trace file back.  Manual steps stand in for the human tester; they answer
from the suite file or, interactively, from the terminal.
"""

from __future__ import annotations

import json
import math
from collections.abc import Callable
from dataclasses import dataclass, field, replace
from pathlib import Path
from xml.etree import ElementTree
from xml.sax.saxutils import quoteattr

from .frontend.ast import DataType, SourceProject
from .instrument import TracePointDatabase
from .runtime import (
    MAX_SAVE_CYCLES,
    Machine,
    PlcState,
    RuntimeFault,
    ScanConfig,
    format_trace,
    format_value,
    idle_cycle,
    init_state,
    io_variables,
    parse_value,
    run_cycle,
    set_inputs,
    tp_reset_op,
    tp_save_op,
)


class SuiteError(Exception):
    pass


class TraceFileError(Exception):
    pass


# -- model ----------------------------------------------------------------


@dataclass(frozen=True)
class SetInputs:
    values: tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class WaitCycles:
    n: int


@dataclass(frozen=True)
class ExpectOutputs:
    values: tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class ManualStep:
    prompt: str
    response: str = "ok"  # "ok" or "fail"
    values: tuple[tuple[str, str], ...] = ()  # inputs the tester sets when answering "ok"


TestStep = SetInputs | WaitCycles | ExpectOutputs | ManualStep


@dataclass(frozen=True)
class TestCase:
    id: str
    name: str
    steps: tuple[TestStep, ...]


@dataclass(frozen=True)
class TestVerdict:
    test_id: str
    outcome: str  # "Passed", "Failed" or "Error"
    trace_file: str
    step: int | None = None
    expected: str | None = None
    actual: str | None = None
    message: str | None = None

    @property
    def passed(self) -> bool:
        return self.outcome == "Passed"


@dataclass(frozen=True)
class ExecutionTrace:
    test_id: str
    visits: dict[int, bool] = field(hash=False)

    def visited(self) -> set[int]:
        return {i for i, v in self.visits.items() if v}


# -- suite files ------------------------------------------------------------


def _pairs(el) -> tuple[tuple[str, str], ...]:
    out = []
    for s in el:
        if s.tag != "set":
            raise SuiteError(f"unexpected <{s.tag}> inside <{el.tag}>")
        out.append((_attr(s, "var"), _attr(s, "value")))
    return tuple(out)


def _attr(el, name: str) -> str:
    try:
        return el.attrib[name]
    except KeyError:
        raise SuiteError(f"<{el.tag}> lacks attribute {name!r}") from None


def parse_suite(text: str, project: SourceProject | None = None) -> list[TestCase]:
    try:
        root = ElementTree.fromstring(text)
    except ElementTree.ParseError as exc:
        raise SuiteError(f"malformed suite: {exc}") from None
    if root.tag != "suite":
        raise SuiteError("root element must be <suite>")
    tests, ids = [], set()
    for t in root:
        if t.tag != "test":
            raise SuiteError(f"unexpected <{t.tag}> in <suite>")
        tid, name = _attr(t, "id"), t.attrib.get("name", "")
        if tid in ids:
            raise SuiteError(f"duplicate test id {tid!r}")
        ids.add(tid)
        steps: list[TestStep] = []
        for el in t:
            if el.tag == "set":
                steps.append(SetInputs(((_attr(el, "var"), _attr(el, "value")),)))
            elif el.tag == "wait":
                n = int(_attr(el, "cycles"))
                if n < 0:
                    raise SuiteError("negative wait")
                steps.append(WaitCycles(n))
            elif el.tag == "expect":
                steps.append(ExpectOutputs(((_attr(el, "var"), _attr(el, "value")),)))
            elif el.tag == "manual":
                resp = el.attrib.get("response", "ok")
                if resp not in ("ok", "fail"):
                    raise SuiteError(f"manual response must be ok or fail, not {resp!r}")
                steps.append(ManualStep(_attr(el, "prompt"), resp, _pairs(el)))
            else:
                raise SuiteError(f"unknown step <{el.tag}>")
        if not steps:
            raise SuiteError(f"test {tid!r} has no steps")
        tests.append(TestCase(tid, name, tuple(steps)))
    if project is not None:
        validate_suite(tests, project)
    return tests


def load_suite(path, project: SourceProject | None = None) -> list[TestCase]:
    return parse_suite(Path(path).read_text(encoding="utf-8"), project)


def suite_to_xml(tests: list[TestCase]) -> str:
    lines = ["<suite>"]
    for t in tests:
        lines.append(f"  <test id={quoteattr(t.id)} name={quoteattr(t.name)}>")
        for s in t.steps:
            if isinstance(s, SetInputs):
                lines += [f"    <set var={quoteattr(k)} value={quoteattr(v)}/>" for k, v in s.values]
            elif isinstance(s, WaitCycles):
                lines.append(f'    <wait cycles="{s.n}"/>')
            elif isinstance(s, ExpectOutputs):
                lines += [f"    <expect var={quoteattr(k)} value={quoteattr(v)}/>" for k, v in s.values]
            else:
                head = f"    <manual prompt={quoteattr(s.prompt)} response={quoteattr(s.response)}"
                if not s.values:
                    lines.append(head + "/>")
                    continue
                lines.append(head + ">")
                lines += [f"      <set var={quoteattr(k)} value={quoteattr(v)}/>" for k, v in s.values]
                lines.append("    </manual>")
        lines.append("  </test>")
    lines.append("</suite>")
    return "\n".join(lines) + "\n"


def emit_suite(tests: list[TestCase], path) -> None:
    Path(path).write_text(suite_to_xml(tests), encoding="utf-8")


def validate_suite(tests: list[TestCase], project: SourceProject) -> None:
    """Check that tests set only process inputs and check only outputs, with parsable values."""
    inputs, outputs = io_variables(project)
    ins = {k.lower(): d for k, d in inputs.items()}
    outs = {k.lower(): d for k, d in outputs.items()}
    for t in tests:
        for s in t.steps:
            table, values, what = None, (), ""
            if isinstance(s, (SetInputs, ManualStep)):
                table, values, what = ins, s.values, "input"
            elif isinstance(s, ExpectOutputs):
                table, values, what = outs, s.values, "output"
            for var, value in values:
                decl = table.get(var.lower())
                if decl is None:
                    raise SuiteError(f"test {t.id}: {var!r} is not a process {what}")
                try:
                    parse_value(value, decl.data_type)
                except ValueError as exc:
                    raise SuiteError(f"test {t.id}: bad value for {var}: {exc}") from None


# -- trace files --------------------------------------------------------------


def parse_trace_text(text: str, db: TracePointDatabase | None = None, test_id: str = "") -> ExecutionTrace:
    visits: dict[int, bool] = {}
    body = text.strip()
    for pair in body.split(", ") if body else []:
        key, sep, val = pair.partition(":")
        if not sep or val not in ("true", "false") or not key.isdigit():
            raise TraceFileError(f"malformed pair {pair!r}")
        i = int(key)
        if i in visits:
            raise TraceFileError(f"duplicate id {i}")
        visits[i] = val == "true"
    if db is not None:
        want = set(db.ids)
        unknown = sorted(set(visits) - want)
        missing = sorted(want - set(visits))
        if unknown:
            raise TraceFileError(f"unknown trace-point id {unknown[0]}")
        if missing:
            raise TraceFileError(f"missing trace-point id {missing[0]}")
    return ExecutionTrace(test_id, dict(sorted(visits.items())))


def read_trace_file(path, db: TracePointDatabase | None = None) -> ExecutionTrace:
    p = Path(path)
    return parse_trace_text(p.read_text(encoding="utf-8"), db, p.stem)


def write_trace_file(trace: ExecutionTrace, path) -> None:
    Path(path).write_text(format_trace(trace.visits), encoding="utf-8")


def trace_filename(test_id: str) -> str:
    return f"{test_id}.trace"


# -- execution ----------------------------------------------------------------

Responder = Callable[[TestCase, int, ManualStep], ManualStep]


def scripted(test: TestCase, index: int, step: ManualStep) -> ManualStep:
    return step


class InteractiveResponder:
    """Ask on the terminal; answers are kept so the run can be replayed as a scripted suite."""

    def __init__(self, ask: Callable[[str], str] | None = None, tell: Callable[[str], None] = print):
        self.ask = ask or (lambda prompt: input(prompt))
        self.tell = tell
        self.answers: dict[tuple[str, int], ManualStep] = {}

    def __call__(self, test: TestCase, index: int, step: ManualStep) -> ManualStep:
        self.tell(f"[{test.id}] {step.prompt}")
        answer = self.ask("ok/fail? ").strip().lower()
        chosen = replace(step, response="fail" if answer.startswith("f") else "ok")
        self.answers[(test.id, index)] = chosen
        return chosen

    def replay_suite(self, tests: list[TestCase]) -> list[TestCase]:
        out = []
        for t in tests:
            steps = tuple(self.answers.get((t.id, k), s) for k, s in enumerate(t.steps))
            out.append(replace(t, steps=steps))
        return out


@dataclass
class _Runner:
    project: SourceProject
    config: ScanConfig
    db: TracePointDatabase | None
    responder: Responder = scripted
    machine: Machine | None = None
    state: PlcState | None = None

    def fresh(self) -> PlcState:
        self.state = init_state(self.project, self.config, self.machine)
        self.machine = self.state.machine
        return self.state

    def run(self, test: TestCase) -> tuple[TestVerdict, ExecutionTrace]:
        st = self.state
        fname = trace_filename(test.id)
        tp_reset_op(st)
        verdict = None
        try:
            verdict = self.steps(st, test, fname)
        except (RuntimeFault, ArithmeticError, RecursionError) as exc:
            verdict = TestVerdict(test.id, "Error", fname, message=str(exc))
            tp_save_op(st, fname)
            self.finish_save(st, idle=True)
        else:
            tp_save_op(st, fname)
            try:
                self.finish_save(st, idle=False)
            except RuntimeFault as exc:
                # a fault while the save is running: the save itself still completes
                if verdict.passed:
                    verdict = TestVerdict(test.id, "Error", fname, message=str(exc))
                self.finish_save(st, idle=True)
        trace = parse_trace_text(st.last_save.text(), self.db, test.id)
        return verdict, trace

    def finish_save(self, st: PlcState, idle: bool) -> None:
        for _ in range(MAX_SAVE_CYCLES):
            if st.pending_save is None:
                return
            if idle:
                idle_cycle(st)
            else:
                run_cycle(st)
        assert st.pending_save is None, "trace save exceeded its cycle bound"

    def steps(self, st: PlcState, test: TestCase, fname: str) -> TestVerdict:
        for k, s in enumerate(test.steps):
            if isinstance(s, SetInputs):
                set_inputs(st, dict(s.values))
            elif isinstance(s, WaitCycles):
                for _ in range(s.n):
                    run_cycle(st)
            elif isinstance(s, ExpectOutputs):
                for var, want in s.values:
                    bad = _mismatch(st, var, want)
                    if bad is not None:
                        return TestVerdict(test.id, "Failed", fname, k, f"{var}={want}", f"{var}={bad}")
            else:
                answer = self.responder(test, k, s)
                if answer.response == "fail":
                    return TestVerdict(test.id, "Failed", fname, k, "ok", "fail", answer.prompt)
                set_inputs(st, dict(answer.values))
        return TestVerdict(test.id, "Passed", fname)


def _mismatch(st: PlcState, var: str, want: str) -> str | None:
    m = st.machine
    key = next((k for k in m.outputs if k.lower() == var.lower()), None)
    if key is None:
        raise RuntimeFault(f"{var!r} is not a process output")
    decl = m.outputs[key].decl
    expected = parse_value(want, decl.data_type)
    actual = st.output_image[key]
    if decl.data_type is DataType.REAL:
        same = math.isclose(actual, expected, rel_tol=1e-9, abs_tol=1e-12)
    else:
        same = actual == expected
    return None if same else format_value(actual, decl.data_type)


def _with_save_dir(config: ScanConfig | None, project: SourceProject, run_dir) -> ScanConfig:
    config = config or ScanConfig.for_project(project)
    if run_dir is not None:
        config = replace(config, save_dir=str(run_dir))
    return config


def run_test_case(
    project: SourceProject,
    config: ScanConfig | None,
    test: TestCase,
    db: TracePointDatabase | None = None,
    run_dir=None,
    responder: Responder = scripted,
) -> tuple[TestVerdict, ExecutionTrace]:
    """Run one test from a freshly initialised state."""
    runner = _Runner(project, _with_save_dir(config, project, run_dir), db, responder)
    runner.fresh()
    return runner.run(test)


def run_suite(
    project: SourceProject,
    config: ScanConfig | None,
    suite: list[TestCase],
    db: TracePointDatabase | None = None,
    run_dir=None,
    no_reinit: bool = False,
    responder: Responder = scripted,
) -> tuple[list[TestVerdict], list[ExecutionTrace]]:
    """Run tests in order.  Each starts from a fresh state unless ``no_reinit``,
    in which case the state is initialised (and one start-up cycle run) once."""
    if run_dir is not None:
        Path(run_dir).mkdir(parents=True, exist_ok=True)
    runner = _Runner(project, _with_save_dir(config, project, run_dir), db, responder)
    verdicts, traces = [], []
    if no_reinit and suite:
        run_cycle(runner.fresh())
    for test in suite:
        if not no_reinit:
            runner.fresh()
        v, t = runner.run(test)
        verdicts.append(v)
        traces.append(t)
    return verdicts, traces


# -- reports ----------------------------------------------------------------------


def report_text(verdicts: list[TestVerdict]) -> str:
    lines = []
    for v in verdicts:
        line = f"{v.test_id}: {v.outcome}"
        if v.outcome == "Failed":
            line += f" at step {v.step} (expected {v.expected}, actual {v.actual})"
        elif v.outcome == "Error":
            line += f" ({v.message})"
        lines.append(line + f" -> {v.trace_file}")
    counts = {o: sum(v.outcome == o for v in verdicts) for o in ("Passed", "Failed", "Error")}
    lines.append(f"{len(verdicts)} tests: {counts['Passed']} passed, {counts['Failed']} failed, {counts['Error']} errors")
    return "\n".join(lines) + "\n"


def report_json(verdicts: list[TestVerdict], fingerprint: str | None = None) -> str:
    doc = {
        "fingerprint": fingerprint,
        "tests": [
            {
                "id": v.test_id,
                "outcome": v.outcome,
                "step": v.step,
                "expected": v.expected,
                "actual": v.actual,
                "message": v.message,
                "trace_file": v.trace_file,
            }
            for v in verdicts
        ],
        "summary": {o: sum(v.outcome == o for v in verdicts) for o in ("Passed", "Failed", "Error")},
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def write_reports(verdicts: list[TestVerdict], run_dir, fingerprint: str | None = None) -> None:
    d = Path(run_dir)
    d.mkdir(parents=True, exist_ok=True)
    (d / "report.txt").write_text(report_text(verdicts), encoding="utf-8")
    (d / "report.json").write_text(report_json(verdicts, fingerprint), encoding="utf-8")
