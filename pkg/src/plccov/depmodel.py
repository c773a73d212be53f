"""Dependency model: project structure plus intra-POU control flow.

Nodes cover the project, tasks, reachable POUs, actions, SFC steps and basic
blocks.  Exploration starts at the task entry programs and follows calls
depth-first; POUs never reached are left out.  Basic blocks are numbered in the
order the walk first meets them, starting at 0.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

from .frontend.ast import (
    COMPOUND,
    Case,
    For,
    If,
    PouDecl,
    Repeat,
    SourceLoc,
    SourceProject,
    StBody,
    Stmt,
    While,
    arm_bodies,
)
from .frontend.printer import format_expr, format_labels
from .frontend.resolve import Symbols, expr_calls, stmt_call_targets


class NodeKind(str, enum.Enum):
    PROJECT = "Project"
    TASK = "Task"
    POU = "Pou"
    ACTION = "Action"
    STEP = "Step"
    BASIC_BLOCK = "BasicBlock"


class EdgeKind(str, enum.Enum):
    CONTAINS = "Contains"
    CALLS = "Calls"
    JUMPS_TO = "JumpsTo"
    SFC_TRANSITION = "SfcTransition"


@dataclass(frozen=True)
class DepNode:
    id: str
    kind: NodeKind
    name: str
    sequential_id: int | None = None
    stmt_span: tuple[SourceLoc, int] | None = None
    loc: SourceLoc | None = None
    # blocks: owning code unit ("Pou" or "Pou.Action"), list address, start index;
    # tasks: name of the entry program
    owner: str | None = None
    list_path: tuple[tuple[int, int], ...] = ()
    start: int = 0
    # steps: (action, qualifier) references
    step_actions: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class DepEdge:
    source: str
    target: str
    kind: EdgeKind
    condition: str | None = None


@dataclass(frozen=True)
class DependencyModel:
    nodes: tuple[DepNode, ...]
    edges: tuple[DepEdge, ...]
    roots: tuple[str, ...]

    @cached_property
    def by_id(self) -> dict[str, DepNode]:
        return {n.id: n for n in self.nodes}

    @cached_property
    def _children(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {n.id: [] for n in self.nodes}
        for e in self.edges:
            if e.kind is EdgeKind.CONTAINS:
                out[e.source].append(e.target)
        return out

    @cached_property
    def _parents(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {n.id: [] for n in self.nodes}
        for e in self.edges:
            if e.kind is EdgeKind.CONTAINS:
                out[e.target].append(e.source)
        return out

    def node(self, node_id: str) -> DepNode:
        return self.by_id[node_id]

    def children(self, node_id: str) -> list[str]:
        return self._children[node_id]

    def parents(self, node_id: str) -> list[str]:
        return self._parents[node_id]

    def edges_from(self, node_id: str, kind: EdgeKind | None = None) -> list[DepEdge]:
        return [e for e in self.edges if e.source == node_id and (kind is None or e.kind is kind)]

    def of_kind(self, kind: NodeKind) -> list[DepNode]:
        return [n for n in self.nodes if n.kind is kind]


def block_id(seq: int) -> str:
    return f"bb:{seq}"


def step_id(pou: str, step: str) -> str:
    return f"step:{pou}.{step}"


def _not(cond: str) -> str:
    return f"NOT ({cond})"


@dataclass
class _Unit:
    """Bookkeeping for one code unit (POU body or action) during the walk."""

    node: str
    owner: str
    block_of: dict[tuple[tuple[tuple[int, int], ...], int], str] = field(default_factory=dict)
    entry: str | None = None


class _Builder:
    def __init__(self, project: SourceProject):
        self.project = project
        self.sym = Symbols(project)
        self.nodes: dict[str, DepNode] = {}
        self.edges: list[DepEdge] = []
        self.edge_set: set[tuple] = set()
        self.next_seq = 0
        self.pou_entry: dict[str, str] = {}
        self.action_entry: dict[tuple[str, str], str] = {}
        self.pou_calls: dict[str, list[str]] = {}
        self.visited_actions: set[tuple[str, str]] = set()

    def add_node(self, node: DepNode) -> None:
        self.nodes[node.id] = node

    def add_edge(self, source: str, target: str, kind: EdgeKind, cond: str | None = None) -> None:
        if kind in (EdgeKind.CONTAINS, EdgeKind.CALLS):
            key = (source, target, kind)
            if key in self.edge_set:
                return
            self.edge_set.add(key)
        self.edges.append(DepEdge(source, target, kind, cond))

    def build(self) -> DependencyModel:
        self.add_node(DepNode("project", NodeKind.PROJECT, "project"))
        roots = []
        for t in self.project.tasks:
            tid = f"task:{t.name}"
            entry = self.sym.pous[t.entry.lower()].name
            self.add_node(DepNode(tid, NodeKind.TASK, t.name, loc=t.loc, owner=entry))
            self.add_edge("project", tid, EdgeKind.CONTAINS)
            roots.append(tid)
        for t in self.project.tasks:
            self.visit_pou(self.sym.pous[t.entry.lower()])
        for t in self.project.tasks:
            for pou in self.closure(self.sym.pous[t.entry.lower()].name):
                self.add_edge(f"task:{t.name}", f"pou:{pou}", EdgeKind.CONTAINS)
        # Contains edges first so the containment tree reads top-down in exports
        ordered = [e for e in self.edges if e.kind is EdgeKind.CONTAINS]
        ordered += [e for e in self.edges if e.kind is not EdgeKind.CONTAINS]
        return DependencyModel(tuple(self.nodes.values()), tuple(ordered), tuple(roots))

    def closure(self, entry: str) -> list[str]:
        seen, order, stack = set(), [], [entry]
        while stack:
            name = stack.pop(0)
            if name in seen:
                continue
            seen.add(name)
            order.append(name)
            stack.extend(self.pou_calls.get(name, ()))
        return order

    # -- POUs and actions ------------------------------------------------

    def visit_pou(self, pou: PouDecl) -> None:
        if pou.name in self.pou_calls:
            return
        self.pou_calls[pou.name] = []
        pid = f"pou:{pou.name}"
        self.add_node(DepNode(pid, NodeKind.POU, pou.name, loc=pou.loc))
        if isinstance(pou.body, StBody):
            unit = _Unit(pid, pou.name)
            self.walk(pou, unit, pou.body.stmts, ())
            self.jumps(unit, pou.body.stmts, (), pid)
            self.pou_entry[pou.name] = unit.entry or pid
        else:
            chart = pou.body.chart
            for step in chart.steps:
                sid = step_id(pou.name, step.name)
                refs = tuple((r.action, r.qualifier) for r in step.actions)
                self.add_node(DepNode(sid, NodeKind.STEP, f"{pou.name}.{step.name}", loc=step.loc, step_actions=refs))
                self.add_edge(pid, sid, EdgeKind.CONTAINS)
                if step.initial:
                    self.pou_entry[pou.name] = sid
            for step in chart.steps:
                sid = step_id(pou.name, step.name)
                for ref in step.actions:
                    act = pou.action(ref.action)
                    self.visit_action(pou, act)
                    self.add_edge(sid, f"action:{pou.name}.{act.name}", EdgeKind.CONTAINS)
            for t in chart.transitions:
                for c in expr_calls(t.cond):
                    self.note_call(pou, None, c.target)
                src, dst = chart.step(t.source).name, chart.step(t.target).name
                self.add_edge(step_id(pou.name, src), step_id(pou.name, dst), EdgeKind.SFC_TRANSITION, format_expr(t.cond))
        for act in pou.actions:
            self.visit_action(pou, act)

    def visit_action(self, pou: PouDecl, act) -> None:
        key = (pou.name, act.name)
        if key in self.visited_actions:
            return
        self.visited_actions.add(key)
        aid = f"action:{pou.name}.{act.name}"
        self.add_node(DepNode(aid, NodeKind.ACTION, f"{pou.name}.{act.name}", loc=act.loc))
        self.add_edge(f"pou:{pou.name}", aid, EdgeKind.CONTAINS)
        unit = _Unit(aid, f"{pou.name}.{act.name}")
        self.walk(pou, unit, act.body, ())
        self.jumps(unit, act.body, (), aid)
        self.action_entry[key] = unit.entry or aid

    def note_call(self, pou: PouDecl, block: str | None, target: str) -> None:
        """Explore a call target (depth-first) and link it from ``block``."""
        found = self.sym.call(pou, target)
        if found is None or found[0] == "builtin":
            return
        kind, obj = found
        if kind == "action":
            self.visit_action(pou, obj)
            dest = self.action_entry[(pou.name, obj.name)]
        else:
            self.visit_pou(obj)
            if obj.name not in self.pou_calls[pou.name]:
                self.pou_calls[pou.name].append(obj.name)
            dest = self.pou_entry[obj.name]
        if block is not None:
            self.add_edge(block, dest, EdgeKind.CALLS)

    # -- basic blocks ----------------------------------------------------

    def walk(self, pou: PouDecl, unit: _Unit, stmts, path) -> None:
        current: str | None = None
        count = 0
        first_loc = None
        start = 0
        for i, s in enumerate(stmts):
            if current is None:
                seq = self.next_seq
                self.next_seq += 1
                current = block_id(seq)
                start, count, first_loc = i, 0, s.loc
                self.add_node(
                    DepNode(current, NodeKind.BASIC_BLOCK, f"{unit.owner}#{seq}", seq,
                            (first_loc, 0), first_loc, unit.owner, path, start)
                )  # fmt: skip
                self.add_edge(unit.node, current, EdgeKind.CONTAINS)
                if unit.entry is None:
                    unit.entry = current
            count += 1
            unit.block_of[(path, i)] = current
            node = self.nodes[current]
            self.nodes[current] = DepNode(
                node.id, node.kind, node.name, node.sequential_id, (first_loc, count), node.loc,
                node.owner, node.list_path, node.start,
            )  # fmt: skip
            for target in stmt_call_targets(s):
                self.note_call(pou, current, target)
            if isinstance(s, COMPOUND):
                for arm, body in enumerate(arm_bodies(s)):
                    if body:
                        self.walk(pou, unit, body, path + ((i, arm),))
                current = None

    def jumps(self, unit: _Unit, stmts, path, cont: str) -> None:
        for i, s in enumerate(stmts):
            if not isinstance(s, COMPOUND):
                continue
            src = unit.block_of[(path, i)]
            succ = unit.block_of.get((path, i + 1), cont)
            bodies = arm_bodies(s)

            def entry(arm: int) -> str:
                return unit.block_of[(path + ((i, arm),), 0)] if bodies[arm] else succ

            if isinstance(s, If):
                conds = [format_expr(c) for c, _ in s.branches]
                for arm, cond in enumerate(conds):
                    self.add_edge(src, entry(arm), EdgeKind.JUMPS_TO, cond)
                self.add_edge(src, entry(len(conds)) if s.else_body is not None else succ,
                              EdgeKind.JUMPS_TO, " AND ".join(_not(c) for c in conds))  # fmt: skip
                inner = succ
            elif isinstance(s, Case):
                sel = format_expr(s.selector)
                conds = [f"{sel} = {format_labels(arm.labels)}" for arm in s.arms]
                for arm, cond in enumerate(conds):
                    self.add_edge(src, entry(arm), EdgeKind.JUMPS_TO, cond)
                else_cond = " AND ".join(_not(c) for c in conds) if conds else "TRUE"
                self.add_edge(src, entry(len(conds)) if s.else_body is not None else succ,
                              EdgeKind.JUMPS_TO, else_cond)  # fmt: skip
                inner = succ
            elif isinstance(s, (For, While)):
                if isinstance(s, For):
                    by = f" BY {format_expr(s.step)}" if s.step is not None else ""
                    cond = f"{s.var} := {format_expr(s.start)} TO {format_expr(s.stop)}{by}"
                else:
                    cond = format_expr(s.cond)
                self.add_edge(src, entry(0), EdgeKind.JUMPS_TO, cond)
                self.add_edge(src, succ, EdgeKind.JUMPS_TO, _not(cond))
                inner = src
            else:  # REPEAT: the body is always entered
                assert isinstance(s, Repeat)
                self.add_edge(src, entry(0), EdgeKind.JUMPS_TO, None)
                inner = src
            for arm, body in enumerate(bodies):
                if body:
                    self.jumps(unit, body, path + ((i, arm),), inner)


def build_model(project: SourceProject) -> DependencyModel:
    """Build the dependency model of everything reachable from the task entries."""
    return _Builder(project).build()


def basic_blocks(model: DependencyModel) -> list[DepNode]:
    return sorted(model.of_kind(NodeKind.BASIC_BLOCK), key=lambda n: n.sequential_id)


def steps(model: DependencyModel) -> list[DepNode]:
    """SFC steps in walk order."""
    return model.of_kind(NodeKind.STEP)


def reachable_pous(model: DependencyModel) -> set[str]:
    return {n.name for n in model.of_kind(NodeKind.POU)}


def call_graph(model: DependencyModel) -> list[tuple[str, str]]:
    """POU-level call edges between ``task:``/``pou:`` ids, derived from block calls."""
    owner_pou: dict[str, str] = {}
    for n in model.nodes:
        if n.kind is NodeKind.POU:
            owner_pou[n.id] = n.id
        elif n.kind in (NodeKind.ACTION, NodeKind.STEP):
            owner_pou[n.id] = f"pou:{n.name.split('.')[0]}"
        elif n.kind is NodeKind.BASIC_BLOCK:
            owner_pou[n.id] = f"pou:{n.owner.split('.')[0]}"
    out: list[tuple[str, str]] = []
    for n in model.of_kind(NodeKind.TASK):
        out.append((n.id, f"pou:{n.owner}"))
    for e in model.edges:
        if e.kind is EdgeKind.CALLS:
            pair = (owner_pou[e.source], owner_pou[e.target])
            if pair[0] != pair[1] and pair not in out:
                out.append(pair)
    return out


def to_dot(model: DependencyModel) -> str:
    """Graphviz rendering for debugging: labels carry sequential ids and conditions."""
    lines = ["digraph dependency_model {", "  node [shape=box, fontname=\"Helvetica\"];"]
    for n in model.nodes:
        label = n.name if n.sequential_id is None else f"{n.name} [{n.sequential_id}]"
        lines.append(f"  {_q(n.id)} [label={_q(label)}, kind={_q(n.kind.value)}];")
    for e in model.edges:
        attrs = [f"kind={_q(e.kind.value)}"]
        if e.condition is not None:
            attrs.append(f"label={_q(e.condition)}")
        if e.kind is EdgeKind.CONTAINS:
            attrs.append("style=dotted")
        lines.append(f"  {_q(e.source)} -> {_q(e.target)} [{', '.join(attrs)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _q(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def block_statements(project: SourceProject, model: DependencyModel) -> dict[str, tuple[Stmt, ...]]:
    """The statements of every basic block, recovered from the block's list address."""
    sym = Symbols(project)
    out = {}
    for b in basic_blocks(model):
        pou_name, _, act = b.owner.partition(".")
        pou = sym.pous[pou_name.lower()]
        stmts = pou.action(act).body if act else pou.body.stmts
        for i, arm in b.list_path:
            stmts = arm_bodies(stmts[i])[arm]
        out[b.id] = tuple(stmts[b.start : b.start + b.stmt_span[1]])
    return out


def block_statement_lines(project: SourceProject, model: DependencyModel) -> dict[str, list[tuple[str, int]]]:
    """``(file, line)`` of each statement start, per basic block."""
    return {bid: [(s.loc.file, s.loc.line) for s in stmts] for bid, stmts in block_statements(project, model).items()}
