"""Statement coverage from per-test traces.

Visits of all tests are OR-combined per trace point.  Leaves of the dependency
model (basic blocks and step activation points) are covered iff their point was
visited; every other node is Covered, Partial or Uncovered depending on whether
all, some or none of the leaves below it were visited.  Reports highlight the
untested parts only: uncovered items are red, partial ones yellow and covered
ones stay unmarked.
"""

from __future__ import annotations

import enum
import html
import json
from dataclasses import dataclass, field
from pathlib import Path

from .depmodel import DependencyModel, EdgeKind, NodeKind, call_graph
from .frontend.ast import SourceLoc
from .instrument import TracePointDatabase
from .testkit import ExecutionTrace


class CoverageError(Exception):
    pass


class CoverageStatus(str, enum.Enum):
    UNCOVERED = "Uncovered"
    PARTIAL = "Partial"
    COVERED = "Covered"

    @property
    def rank(self) -> int:
        return _RANK[self]


_RANK = {CoverageStatus.UNCOVERED: 0, CoverageStatus.PARTIAL: 1, CoverageStatus.COVERED: 2}


def status_of(leaves: set[int], visited: set[int]) -> CoverageStatus:
    """Status of a node from the visit state of the leaves below it.

    A node without any leaf (e.g. an empty POU) has nothing left to test and
    counts as covered.
    """
    hit = len(leaves & visited)
    if hit == len(leaves):
        return CoverageStatus.COVERED
    return CoverageStatus.UNCOVERED if hit == 0 else CoverageStatus.PARTIAL


# -- superimposition -------------------------------------------------------


@dataclass(frozen=True)
class VisitMatrix:
    tests: tuple[str, ...]
    points: tuple[int, ...]
    visited: tuple[tuple[bool, ...], ...]  # one row per test

    def column(self, point_id: int) -> tuple[bool, ...]:
        try:
            k = self.points.index(point_id)
        except ValueError:
            raise CoverageError(f"unknown trace-point id {point_id}") from None
        return tuple(row[k] for row in self.visited)

    def union(self) -> set[int]:
        return {p for k, p in enumerate(self.points) if any(row[k] for row in self.visited)}


def superimpose(traces: list[ExecutionTrace], db: TracePointDatabase) -> VisitMatrix:
    ids = tuple(db.ids)
    want = set(ids)
    seen, rows = set(), []
    for t in traces:
        if t.test_id in seen:
            raise CoverageError(f"duplicate test id {t.test_id!r}")
        seen.add(t.test_id)
        if set(t.visits) != want:
            raise CoverageError(f"trace of {t.test_id!r} does not match the trace-point database")
        rows.append(tuple(bool(t.visits[i]) for i in ids))
    return VisitMatrix(tuple(t.test_id for t in traces), ids, tuple(rows))


def was_visited(matrix: VisitMatrix, point_id: int) -> bool:
    return any(matrix.column(point_id))


# -- rollup -------------------------------------------------------------------


@dataclass(frozen=True)
class Finding:
    node: str
    kind: str
    name: str
    loc: SourceLoc | None

    def sort_key(self):
        loc = self.loc
        return (loc is not None, loc.file if loc else "", loc.line if loc else 0, loc.col if loc else 0, self.node)


@dataclass(frozen=True)
class CoverageReport:
    status: dict[str, CoverageStatus] = field(hash=False)
    untested: tuple[Finding, ...]
    totals: dict[str, dict[str, int]] = field(hash=False)
    per_test_counts: dict[str, int] = field(hash=False)
    transitions: tuple[tuple[str, str, str, bool], ...] = ()  # (source, target, condition, traversed)
    leaf_points: dict[str, int] = field(default_factory=dict, hash=False)  # leaf node -> trace point
    visited_points: tuple[int, ...] = ()
    fingerprint: str = ""

    def of(self, node_id: str) -> CoverageStatus:
        return self.status[node_id]


def leaf_points(model: DependencyModel, db: TracePointDatabase) -> dict[str, int]:
    """Map every leaf node (basic block or step) to its trace point, checking the pair is consistent."""
    refs = db.by_ref()
    leaves = {n.id for n in model.nodes if n.kind in (NodeKind.BASIC_BLOCK, NodeKind.STEP)}
    if set(refs) != leaves:
        raise CoverageError("trace-point database does not belong to this dependency model")
    return {ref: refs[ref] for ref in sorted(leaves, key=lambda r: refs[r])}


def _leaf_sets(model: DependencyModel, points: dict[str, int]) -> dict[str, frozenset[int]]:
    memo: dict[str, frozenset[int]] = {}

    def leaves(nid: str) -> frozenset[int]:
        if nid not in memo:
            acc = {points[nid]} if nid in points else set()
            for c in model.children(nid):
                acc |= leaves(c)
            memo[nid] = frozenset(acc)
        return memo[nid]

    for n in model.nodes:
        leaves(n.id)
    return memo


def rollup(model: DependencyModel, matrix: VisitMatrix, db: TracePointDatabase) -> CoverageReport:
    if tuple(db.ids) != matrix.points:
        raise CoverageError("visit matrix and trace-point database disagree")
    points = leaf_points(model, db)
    visited = matrix.union()
    sets = _leaf_sets(model, points)
    status = {n.id: status_of(set(sets[n.id]), visited) for n in model.nodes}

    findings = []
    for n in model.nodes:
        # a step never activated is reported even if its actions ran elsewhere
        never_active = n.id in points and points[n.id] not in visited
        if status[n.id] is not CoverageStatus.UNCOVERED and not never_active:
            continue
        if any(status[p] is CoverageStatus.UNCOVERED for p in model.parents(n.id)):
            continue
        findings.append(Finding(n.id, n.kind.value, n.name, n.loc))
    findings.sort(key=Finding.sort_key)

    totals: dict[str, dict[str, int]] = {}
    for n in model.nodes:
        row = totals.setdefault(n.kind.value, {s.value: 0 for s in CoverageStatus})
        row[status[n.id].value] += 1
    total_leaves = len(points)
    totals["points"] = {"total": total_leaves, "visited": len(visited), "unvisited": total_leaves - len(visited)}

    step_point = {nid: p for nid, p in points.items() if nid.startswith("step:")}
    transitions = tuple(
        (e.source, e.target, e.condition or "", step_point[e.target] in visited)
        for e in model.edges
        if e.kind is EdgeKind.SFC_TRANSITION
    )
    per_test = {t: sum(row) for t, row in zip(matrix.tests, matrix.visited)}
    return CoverageReport(
        status, tuple(findings), totals, per_test, transitions, points, tuple(sorted(visited)), db.project_fingerprint
    )


def coverage(model: DependencyModel, traces: list[ExecutionTrace], db: TracePointDatabase) -> CoverageReport:
    return rollup(model, superimpose(traces, db), db)


def find_untested(
    report: CoverageReport, kinds: set[str] | None = None, model: DependencyModel | None = None, leaves: bool = False
) -> list[Finding]:
    """Maximal uncovered subtrees, optionally restricted to node kinds.

    With ``leaves`` (and the ``model``), every uncovered block or step is listed too.
    """
    out = list(report.untested)
    if leaves:
        if model is None:
            raise ValueError("listing uncovered leaves needs the model")
        have = {f.node for f in out}
        for nid in report.leaf_points:
            if report.status[nid] is CoverageStatus.UNCOVERED and nid not in have:
                n = model.node(nid)
                out.append(Finding(nid, n.kind.value, n.name, n.loc))
        out.sort(key=Finding.sort_key)
    if kinds is not None:
        out = [f for f in out if f.kind in kinds]
    return out


# -- emitters -----------------------------------------------------------------

FILL = {
    CoverageStatus.UNCOVERED: "#c0392b",  # red
    CoverageStatus.PARTIAL: "#f4d03f",  # yellow
    CoverageStatus.COVERED: "#f2f2f2",  # light grey, i.e. unmarked
}
FONT = {CoverageStatus.UNCOVERED: "#ffffff", CoverageStatus.PARTIAL: "#000000", CoverageStatus.COVERED: "#000000"}


def _loc_text(loc: SourceLoc | None) -> str:
    return f"{loc.file}:{loc.line}:{loc.col}" if loc is not None and loc.line else "-"


def render_text(report: CoverageReport, model: DependencyModel) -> str:
    lines = [f"Untested code ({len(report.untested)} findings)"]
    for f in report.untested:
        lines.append(f"  {f.kind:<10} {f.name:<40} {_loc_text(f.loc)}")
    if not report.untested:
        lines.append("  none")
    lines.append("")
    lines.append("Partially tested")
    partial = [n for n in model.nodes if report.status[n.id] is CoverageStatus.PARTIAL
               and n.kind in (NodeKind.TASK, NodeKind.POU, NodeKind.ACTION, NodeKind.STEP)]  # fmt: skip
    for n in partial:
        lines.append(f"  {n.kind.value:<10} {n.name}")
    if not partial:
        lines.append("  none")
    lines.append("")
    lines.append("SFC transitions")
    for src, dst, cond, hit in report.transitions:
        lines.append(f"  {src} -> {dst} [{cond}] {'traversed' if hit else 'NOT traversed'}")
    if not report.transitions:
        lines.append("  none")
    lines.append("")
    pts = report.totals["points"]
    lines.append(f"trace points visited: {pts['visited']} of {pts['total']}")
    for test, count in report.per_test_counts.items():
        lines.append(f"  {test}: {count}")
    return "\n".join(lines) + "\n"


def _q(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def render_dot(report: CoverageReport, model: DependencyModel) -> str:
    """Call graph of tasks and POUs; POUs are filled according to their status."""
    lines = [
        "digraph coverage {",
        '  rankdir=LR;',
        '  node [fontname="Helvetica", shape=box, style=filled];',
    ]
    for n in model.nodes:
        if n.kind is NodeKind.TASK:
            lines.append(f"  {_q(n.id)} [label={_q(n.name)}, shape=ellipse, style=solid];")
        elif n.kind is NodeKind.POU:
            st = report.status[n.id]
            lines.append(
                f"  {_q(n.id)} [label={_q(n.name)}, fillcolor={_q(FILL[st])}, fontcolor={_q(FONT[st])},"
                f" tooltip={_q(st.value)}];"
            )
    for src, dst in call_graph(model):
        lines.append(f"  {_q(src)} -> {_q(dst)};")
    lines.append("}")
    return "\n".join(lines) + "\n"


_CSS = """body { font-family: sans-serif; }
pre { margin: 0; }
.uncovered { background: #c0392b; color: #fff; }
.partial { background: #f4d03f; }
table.src td { font-family: monospace; white-space: pre; padding: 0 6px; }
td.ln { color: #888; text-align: right; }
"""


_POU_END = ("END_PROGRAM", "END_FUNCTION_BLOCK", "END_FUNCTION")


def _css_class(st: CoverageStatus) -> str:
    return {CoverageStatus.UNCOVERED: "uncovered", CoverageStatus.PARTIAL: "partial"}.get(st, "")


def render_html(report: CoverageReport, model: DependencyModel, sources=None, block_lines=None) -> str:
    """Static page: findings, then every POU with its source and uncovered lines marked.

    ``sources`` maps file path to text; ``block_lines`` maps block node ids to
    the lines of the statements they contain (see :func:`block_statement_lines`).
    """
    sources = dict(sources or {})
    block_lines = block_lines or {}
    esc = html.escape
    out = ["<!DOCTYPE html>", "<html><head><meta charset=\"utf-8\"><title>Coverage</title>",
           f"<style>{_CSS}</style></head><body>", "<h1>Untested code</h1>", "<ul>"]  # fmt: skip
    for f in report.untested:
        out.append(f"<li class=\"uncovered\">{esc(f.kind)} {esc(f.name)} ({esc(_loc_text(f.loc))})</li>")
    out.append("</ul>")
    bad_lines: dict[str, set[int]] = {}
    for nid, lines in block_lines.items():
        if report.status.get(nid) is CoverageStatus.UNCOVERED:
            for file, line in lines:
                bad_lines.setdefault(file, set()).add(line)
    pou_nodes = model.of_kind(NodeKind.POU)
    starts = sorted((n.loc.file, n.loc.line) for n in pou_nodes if n.loc)
    for n in pou_nodes:
        st = report.status[n.id]
        cls = _css_class(st)
        out.append(f"<h2 id=\"{esc(n.id)}\" class=\"{cls}\">{esc(n.name)}</h2>")
        steps = [c for c in model.children(n.id) if model.node(c).kind is NodeKind.STEP]
        if steps:
            out.append("<h3>SFC steps</h3><ul>")
            for sid in steps:
                s_st = report.status[sid]
                out.append(f"<li class=\"{_css_class(s_st)}\">{esc(model.node(sid).name)}: {s_st.value}</li>")
            out.append("</ul>")
        actions = [c for c in model.children(n.id) if model.node(c).kind is NodeKind.ACTION]
        if actions:
            out.append("<h3>Actions</h3><ul>")
            for aid in actions:
                a_st = report.status[aid]
                out.append(f"<li class=\"{_css_class(a_st)}\">{esc(model.node(aid).name)}: {a_st.value}</li>")
            out.append("</ul>")
        text = sources.get(n.loc.file) if n.loc else None
        if text is None:
            continue
        lines = text.splitlines()
        first = n.loc.line
        later = [ln for f, ln in starts if f == n.loc.file and ln > first]
        last = (min(later) - 1) if later else len(lines)
        for ln in range(first, last + 1):
            if lines[ln - 1].strip().upper().startswith(_POU_END):
                last = ln
                break
        out.append("<table class=\"src\">")
        marks = bad_lines.get(n.loc.file, set())
        for ln in range(first, last + 1):
            code = lines[ln - 1] if ln - 1 < len(lines) else ""
            mark = " class=\"uncovered\"" if ln in marks else ""
            out.append(f"<tr{mark}><td class=\"ln\">{ln}</td><td>{esc(code)}</td></tr>")
        out.append("</table>")
    out.append("</body></html>")
    return "\n".join(out) + "\n"


def report_to_dict(report: CoverageReport) -> dict:
    return {
        "fingerprint": report.fingerprint,
        "status": {k: v.value for k, v in report.status.items()},
        "untested": [
            {"node": f.node, "kind": f.kind, "name": f.name,
             "loc": [f.loc.file, f.loc.line, f.loc.col] if f.loc is not None else None}
            for f in report.untested
        ],  # fmt: skip
        "totals": report.totals,
        "per_test_counts": report.per_test_counts,
        "transitions": [
            {"source": s, "target": t, "condition": c, "traversed": hit} for s, t, c, hit in report.transitions
        ],
        "leaf_points": report.leaf_points,
        "visited_points": list(report.visited_points),
    }


def report_from_dict(doc: dict) -> CoverageReport:
    return CoverageReport(
        status={k: CoverageStatus(v) for k, v in doc["status"].items()},
        untested=tuple(
            Finding(f["node"], f["kind"], f["name"], SourceLoc(*f["loc"]) if f["loc"] is not None else None)
            for f in doc["untested"]
        ),
        totals={k: dict(v) for k, v in doc["totals"].items()},
        per_test_counts=dict(doc["per_test_counts"]),
        transitions=tuple((t["source"], t["target"], t["condition"], t["traversed"]) for t in doc["transitions"]),
        leaf_points=dict(doc["leaf_points"]),
        visited_points=tuple(doc["visited_points"]),
        fingerprint=doc["fingerprint"],
    )


def render_json(report: CoverageReport) -> str:
    return json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n"


def load_report_json(path) -> CoverageReport:
    return report_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def emit_report(report: CoverageReport, model: DependencyModel, fmt: str, path, sources=None, block_lines=None) -> None:
    if fmt == "text":
        text = render_text(report, model)
    elif fmt == "dot":
        text = render_dot(report, model)
    elif fmt == "html":
        text = render_html(report, model, sources, block_lines)
    elif fmt == "json":
        text = render_json(report)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    Path(path).write_text(text, encoding="utf-8")
