"""Trace-point instrumentation.

Every basic block gets one ``tpr(i := id)`` call as its first statement, and
every SFC step gets a generated P1 action holding a single ``tpr`` call so that
step activation is recorded by instrumented code as well.  The trace array and
the three tracing routines are generated into a separate source file.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from xml.etree import ElementTree
from xml.sax.saxutils import quoteattr

from .depmodel import DependencyModel, basic_blocks, block_id, step_id, steps
from .frontend.ast import (
    COMPOUND,
    ActionDecl,
    Arg,
    CallStmt,
    Case,
    CaseArm,
    DataType,
    For,
    If,
    Literal,
    PouKind,
    Repeat,
    SfcBody,
    SfcChart,
    SourceLoc,
    SourceProject,
    StBody,
    StepAction,
    Stmt,
    While,
)
from .frontend.lexer import KEYWORDS
from .frontend.parser import parse_file
from .frontend.printer import pretty_print
from .frontend.resolve import BUILTINS, resolve

TRACE_FILE = "__tracing__.st"
STEP_ACTION_PREFIX = "tps_"


class InstrumentationError(Exception):
    pass


class DatabaseError(Exception):
    pass


@dataclass(frozen=True)
class TraceNames:
    array: str = "tpa"
    record: str = "tpr"
    reset: str = "tp_reset"
    save: str = "tp_save"
    max_tp: int = -1

    def non_default(self) -> dict[str, str]:
        base = TraceNames()
        return {k: getattr(self, k) for k in ("array", "record", "reset", "save") if getattr(self, k) != getattr(base, k)}


def detect_trace_names(project: SourceProject) -> TraceNames | None:
    """Recognise the generated tracing runtime in an (instrumented) project.

    The runtime is the only global array together with the three POUs declared
    in the same file: recorder, reset and save, in that order.
    """
    arrays = [v for v in project.global_vars if v.dims is not None]
    if len(arrays) != 1:
        return None
    arr = arrays[0]
    pous = [p for p in project.pous if p.loc.file == arr.loc.file]
    if len(pous) != 3:
        return None
    rec, reset, save = pous
    if (rec.kind, reset.kind, save.kind) != (PouKind.FUNCTION, PouKind.FUNCTION, PouKind.FUNCTION_BLOCK):
        return None
    return TraceNames(arr.name, rec.name, reset.name, save.name, arr.dims[1])


# -- database -------------------------------------------------------------


@dataclass(frozen=True)
class TracePoint:
    id: int
    pou: str  # "Pou", "Pou.Action" or, for step points, "Pou.Step"
    source_start_pos: SourceLoc
    block_ref: str
    kind: str = "block"  # or "step"


@dataclass(frozen=True)
class TracePointDatabase:
    points: tuple[TracePoint, ...]
    max_tp: int
    project_fingerprint: str
    names: TraceNames = field(default_factory=TraceNames)

    def __post_init__(self):
        ids = [p.id for p in self.points]
        if ids != list(range(len(ids))):
            raise DatabaseError("trace-point ids must be 0..N-1 in ascending order")
        if self.max_tp != len(ids) - 1:
            raise DatabaseError(f"max_tp {self.max_tp} does not match {len(ids)} points")

    @property
    def ids(self) -> list[int]:
        return [p.id for p in self.points]

    def point(self, tp_id: int) -> TracePoint:
        return self.points[tp_id]

    def by_ref(self) -> dict[str, int]:
        return {p.block_ref: p.id for p in self.points}


def emit_tp_database(db: TracePointDatabase, path) -> None:
    """Write ``db`` as XML; see :func:`load_tp_database` for the inverse."""
    extra = "".join(f" {k}={quoteattr(v)}" for k, v in db.names.non_default().items())
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<tracepoints max_tp="{db.max_tp}" fingerprint="{db.project_fingerprint}"{extra}>',
    ]
    for p in db.points:
        loc = p.source_start_pos
        lines.append(
            f'  <tp id="{p.id}" pou={quoteattr(p.pou)} kind="{p.kind}"'
            f' line="{loc.line}" col="{loc.col}" file={quoteattr(loc.file)}/>'
        )
    lines.append("</tracepoints>")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_tp_database(path, expect_fingerprint: str | None = None) -> TracePointDatabase:
    try:
        root = ElementTree.parse(path).getroot()
    except ElementTree.ParseError as exc:
        raise DatabaseError(f"{path}: malformed database: {exc}") from None
    if root.tag != "tracepoints":
        raise DatabaseError(f"{path}: root element must be <tracepoints>")
    try:
        points = []
        for el in root:
            if el.tag != "tp":
                raise DatabaseError(f"{path}: unexpected element <{el.tag}>")
            pou, kind = el.attrib["pou"], el.attrib["kind"]
            if kind not in ("block", "step"):
                raise DatabaseError(f"{path}: unknown point kind {kind!r}")
            tp_id = int(el.attrib["id"])
            ref = block_id(tp_id) if kind == "block" else step_id(*pou.split(".", 1))
            loc = SourceLoc(el.attrib["file"], int(el.attrib["line"]), int(el.attrib["col"]))
            points.append(TracePoint(tp_id, pou, loc, ref, kind))
        max_tp = int(root.attrib["max_tp"])
        fingerprint = root.attrib["fingerprint"]
    except (KeyError, ValueError) as exc:
        raise DatabaseError(f"{path}: bad or missing attribute: {exc}") from None
    names = TraceNames(**{k: root.attrib[k] for k in ("array", "record", "reset", "save") if k in root.attrib})
    db = TracePointDatabase(tuple(points), max_tp, fingerprint, replace(names, max_tp=max_tp))
    if expect_fingerprint is not None and expect_fingerprint != fingerprint:
        raise DatabaseError(f"{path}: database fingerprint does not match the instrumented project")
    return db


# -- transformation ---------------------------------------------------------


@dataclass(frozen=True)
class InstrumentedProject:
    base: SourceProject  # statements keep their original source locations
    trace_decls: tuple  # generated array declaration and tracing POUs
    names: TraceNames

    @property
    def sources(self) -> tuple[tuple[str, str], ...]:
        return self.base.files


def fingerprint(files) -> str:
    h = hashlib.sha256()
    for path, text in files:
        h.update(path.encode())
        h.update(b"\0")
        h.update(text.encode())
        h.update(b"\0")
    return h.hexdigest()


def _identifiers(project: SourceProject) -> set[str]:
    out = {k.lower() for k in KEYWORDS} | set(BUILTINS)
    out |= {v.name.lower() for v in project.global_vars}
    for p in project.pous:
        out.add(p.name.lower())
        out |= {v.name.lower() for v in p.vars}
        out |= {a.name.lower() for a in p.actions}
        if isinstance(p.body, SfcBody):
            out |= {s.name.lower() for s in p.body.chart.steps}
    return out


def _fresh(base: str, taken: set[str]) -> str:
    name, k = base, 0
    while name.lower() in taken:
        k += 1
        name = f"{base}_{k}"
    taken.add(name.lower())
    return name


def runtime_source(names: TraceNames) -> str:
    n = names.max_tp
    return f"""VAR_GLOBAL
    {names.array} : ARRAY[0..{n}] OF BOOL;
END_VAR

FUNCTION {names.record} : BOOL
VAR_INPUT
    i : DINT;
END_VAR
{names.array}[i] := TRUE;
{names.record} := TRUE;
END_FUNCTION

FUNCTION {names.reset} : BOOL
VAR
    k : DINT;
END_VAR
FOR k := 0 TO {n} DO
    {names.array}[k] := FALSE;
END_FOR;
{names.reset} := TRUE;
END_FUNCTION

FUNCTION_BLOCK {names.save}
VAR_INPUT
    xExecute : BOOL;
    szFilename : STRING;
END_VAR
VAR_OUTPUT
    xDone : BOOL;
END_VAR
END_FUNCTION_BLOCK
"""


def probe(record: str, tp_id: int) -> CallStmt:
    return CallStmt(record, (Arg("i", Literal(tp_id, DataType.DINT)),))


def _insert(stmts, path, probes, record) -> tuple[Stmt, ...]:
    """Rebuild a statement list, prefixing block starts with their probe."""
    out = []
    for i, s in enumerate(stmts):
        tp = probes.get((path, i))
        if tp is not None:
            out.append(probe(record, tp))
        if isinstance(s, COMPOUND):
            s = _map_arms(s, lambda arm, body: _insert(body, path + ((i, arm),), probes, record))
        out.append(s)
    return tuple(out)


def _map_arms(s: Stmt, fn) -> Stmt:
    """Apply ``fn(arm_index, body)`` to every arm body of a compound statement."""
    if isinstance(s, If):
        branches = tuple((c, fn(k, b)) for k, (c, b) in enumerate(s.branches))
        els = fn(len(branches), s.else_body) if s.else_body is not None else None
        return replace(s, branches=branches, else_body=els)
    if isinstance(s, Case):
        arms = tuple(CaseArm(a.labels, fn(k, a.body)) for k, a in enumerate(s.arms))
        els = fn(len(arms), s.else_body) if s.else_body is not None else None
        return replace(s, arms=arms, else_body=els)
    if isinstance(s, (For, While, Repeat)):
        return replace(s, body=fn(0, s.body))
    return s


def instrument(project: SourceProject, model: DependencyModel) -> tuple[InstrumentedProject, TracePointDatabase]:
    """Insert trace points for every basic block and SFC step of ``model``."""
    if detect_trace_names(project) is not None:
        raise InstrumentationError("project is already instrumented")
    if any(path == TRACE_FILE for path, _ in project.files):
        raise InstrumentationError(f"source file name {TRACE_FILE!r} is reserved")

    blocks = basic_blocks(model)
    chart_steps = steps(model)
    taken = _identifiers(project)
    names = TraceNames(
        _fresh("tpa", taken), _fresh("tpr", taken), _fresh("tp_reset", taken), _fresh("tp_save", taken),
        len(blocks) + len(chart_steps) - 1,
    )  # fmt: skip

    points: list[TracePoint] = []
    probes: dict[str, dict] = {}  # code unit -> {(list path, index): id}
    for b in blocks:
        probes.setdefault(b.owner, {})[(b.list_path, b.start)] = b.sequential_id
        points.append(TracePoint(b.sequential_id, b.owner, b.stmt_span[0], b.id, "block"))
    step_points: dict[str, dict[str, int]] = {}
    for k, st in enumerate(chart_steps):
        tp_id = len(blocks) + k
        pou, step = st.name.split(".", 1)
        step_points.setdefault(pou, {})[step] = tp_id
        points.append(TracePoint(tp_id, st.name, st.loc, st.id, "step"))
    assert all(p.id <= names.max_tp for p in points)

    new_pous = []
    for pou in project.pous:
        actions = tuple(
            replace(a, body=_insert(a.body, (), probes.get(f"{pou.name}.{a.name}", {}), names.record))
            for a in pou.actions
        )
        body = pou.body
        if isinstance(body, StBody):
            body = StBody(_insert(body.stmts, (), probes.get(pou.name, {}), names.record))
        elif pou.name in step_points:
            extra, new_steps = [], []
            for s in body.chart.steps:
                act = _fresh(STEP_ACTION_PREFIX + s.name, taken)
                extra.append(ActionDecl(act, (probe(names.record, step_points[pou.name][s.name]),)))
                new_steps.append(replace(s, actions=s.actions + (StepAction(act, "P1"),)))
            body = SfcBody(SfcChart(tuple(new_steps), body.chart.transitions))
            actions += tuple(extra)
        new_pous.append(replace(pou, body=body, actions=actions))

    gen_pous, gen_globals, _ = parse_file(runtime_source(names), TRACE_FILE)
    base = SourceProject(
        pous=tuple(new_pous) + tuple(gen_pous),
        tasks=project.tasks,
        global_vars=project.global_vars + tuple(gen_globals),
        files=tuple(project.files) + ((TRACE_FILE, ""),),
    )
    resolve(base)
    printed = tuple(pretty_print(base))
    base = replace(base, files=printed)
    db = TracePointDatabase(tuple(points), names.max_tp, fingerprint(printed), names)
    return InstrumentedProject(base, tuple(gen_globals) + tuple(gen_pous), names), db


def _is_call_to(s: Stmt, targets: set[str]) -> bool:
    return isinstance(s, CallStmt) and s.target.lower() in targets


def _erase(stmts, targets: set[str]) -> tuple[Stmt, ...]:
    return tuple(
        _map_arms(s, lambda _arm, body: _erase(body, targets))
        for s in stmts
        if not _is_call_to(s, targets)
    )


def strip_instrumentation(project: SourceProject | InstrumentedProject) -> SourceProject:
    """Remove everything :func:`instrument` added; the result equals the original AST."""
    if isinstance(project, InstrumentedProject):
        project = project.base
    names = detect_trace_names(project)
    if names is None:
        return project
    runtime_file = next(v.loc.file for v in project.global_vars if v.dims is not None)
    targets = {names.record.lower(), names.reset.lower(), names.save.lower()}
    pous = []
    for pou in project.pous:
        if pou.loc.file == runtime_file:
            continue
        generated = {
            a.name.lower() for a in pou.actions if a.body and all(_is_call_to(s, targets) for s in a.body)
        }
        actions = tuple(
            replace(a, body=_erase(a.body, targets)) for a in pou.actions if a.name.lower() not in generated
        )
        body = pou.body
        if isinstance(body, StBody):
            body = StBody(_erase(body.stmts, targets))
        else:
            new_steps = tuple(
                replace(s, actions=tuple(r for r in s.actions if r.action.lower() not in generated))
                for s in body.chart.steps
            )
            body = SfcBody(SfcChart(new_steps, body.chart.transitions))
        pous.append(replace(pou, body=body, actions=actions))
    return SourceProject(
        pous=tuple(pous),
        tasks=project.tasks,
        global_vars=tuple(v for v in project.global_vars if v.loc.file != runtime_file),
        files=tuple((p, t) for p, t in project.files if p != runtime_file),
    )


def count_probes(project: SourceProject, record: str) -> int:
    """Number of recorder calls anywhere in ``project`` (generated step actions included)."""
    from .frontend.resolve import pou_code, walk_stmts

    key = record.lower()
    return sum(
        1
        for pou in project.pous
        for _, stmts in pou_code(pou)
        for s in walk_stmts(stmts)
        if isinstance(s, CallStmt) and s.target.lower() == key
    )


__all__ = [
    "DatabaseError",
    "InstrumentationError",
    "InstrumentedProject",
    "TracePoint",
    "TracePointDatabase",
    "TraceNames",
    "count_probes",
    "detect_trace_names",
    "emit_tp_database",
    "fingerprint",
    "instrument",
    "load_tp_database",
    "strip_instrumentation",
]
