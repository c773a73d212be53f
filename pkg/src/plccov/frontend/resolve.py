"""Name binding and static checks for a parsed project."""

from __future__ import annotations

from collections.abc import Iterator

from .ast import (
    COMPOUND,
    Assign,
    Binary,
    CallExpr,
    CallStmt,
    Case,
    DataType,
    Exit,
    Expr,
    For,
    If,
    Index,
    Literal,
    Name,
    PouDecl,
    PouKind,
    Repeat,
    SfcBody,
    SourceLoc,
    SourceProject,
    StBody,
    Stmt,
    Storage,
    Unary,
    VarDecl,
    While,
    arm_bodies,
)
from .errors import DuplicateError, RecursionError_, ResolveError

# name -> (min args, max args)
BUILTINS: dict[str, tuple[int, int]] = {
    "abs": (1, 1),
    "min": (2, 2),
    "max": (2, 2),
    "limit": (3, 3),
    "sel": (3, 3),
    "time": (0, 0),
}
QUALIFIERS = frozenset({"N", "P1", "P0"})


class Symbols:
    """Case-insensitive lookup tables shared by the resolver, model builder and interpreter."""

    def __init__(self, project: SourceProject):
        self.project = project
        self.pous = {p.name.lower(): p for p in project.pous}
        self.globals = {v.name.lower(): v for v in project.global_vars}

    def var(self, pou: PouDecl, name: str) -> tuple[str, VarDecl] | None:
        """Resolve a variable reference inside ``pou``.

        Returns ``("local", decl)``, ``("global", decl)`` or ``("result", decl)``
        for the return variable of a function.
        """
        key = name.lower()
        decl = pou.var(name)
        if decl is not None:
            return "local", decl
        if pou.kind is PouKind.FUNCTION and key == pou.name.lower():
            return "result", VarDecl(pou.name, pou.return_type, Storage.LOCAL)
        decl = self.globals.get(key)
        if decl is not None:
            return "global", decl
        return None

    def call(self, pou: PouDecl, target: str):
        """Classify a call target as ``("action", ActionDecl)``, ``("pou", PouDecl)``
        or ``("builtin", name)``; None when unbound."""
        key = target.lower()
        if pou.kind is not PouKind.FUNCTION:
            act = pou.action(target)
            if act is not None:
                return "action", act
        callee = self.pous.get(key)
        if callee is not None:
            return "pou", callee
        if key in BUILTINS:
            return "builtin", key
        return None


def expr_calls(e: Expr) -> Iterator[CallExpr]:
    """Call expressions inside ``e`` in evaluation order (arguments first)."""
    if isinstance(e, CallExpr):
        for a in e.args:
            yield from expr_calls(a.value)
        yield e
    elif isinstance(e, Binary):
        yield from expr_calls(e.left)
        yield from expr_calls(e.right)
    elif isinstance(e, Unary):
        yield from expr_calls(e.operand)
    elif isinstance(e, Index):
        yield from expr_calls(e.index)


def header_exprs(stmt: Stmt) -> tuple[Expr, ...]:
    """Expressions evaluated by the statement itself, excluding nested arm bodies."""
    if isinstance(stmt, Assign):
        return (stmt.value,) if stmt.index is None else (stmt.index, stmt.value)
    if isinstance(stmt, CallStmt):
        return tuple(a.value for a in stmt.args if not a.output)
    if isinstance(stmt, If):
        return tuple(c for c, _ in stmt.branches)
    if isinstance(stmt, Case):
        return (stmt.selector,)
    if isinstance(stmt, For):
        return tuple(e for e in (stmt.start, stmt.stop, stmt.step) if e is not None)
    if isinstance(stmt, While):
        return (stmt.cond,)
    if isinstance(stmt, Repeat):
        return (stmt.until,)
    return ()


def stmt_call_targets(stmt: Stmt) -> list[str]:
    """Call targets made by a statement's own expressions (not nested arms), in order."""
    out = [c.target for e in header_exprs(stmt) for c in expr_calls(e)]
    if isinstance(stmt, CallStmt):
        out.append(stmt.target)
    return out


def walk_stmts(stmts) -> Iterator[Stmt]:
    for s in stmts:
        yield s
        for body in arm_bodies(s):
            if body:
                yield from walk_stmts(body)


def pou_code(pou: PouDecl):
    """``(action name or None, statements)`` for the body and every action."""
    if isinstance(pou.body, StBody):
        yield None, pou.body.stmts
    for act in pou.actions:
        yield act.name, act.body


class Resolver:
    def __init__(self, project: SourceProject):
        self.project = project
        self.sym = Symbols(project)

    def run(self) -> None:
        self.check_duplicates()
        self.check_tasks()
        self.check_arrays()
        for pou in self.project.pous:
            self.check_pou(pou)
        self.check_recursion()

    def check_duplicates(self) -> None:
        def unique(items, what):
            seen: dict[str, object] = {}
            for name, loc in items:
                key = str(name).lower()
                if key in seen:
                    raise DuplicateError(f"duplicate {what} {name!r}", loc)
                seen[key] = loc

        p = self.project
        unique(((x.name, x.loc) for x in p.pous), "POU")
        unique(((x.name, x.loc) for x in p.global_vars), "global variable")
        unique(((x.name, x.loc) for x in p.tasks), "task")
        unique(((x.priority, x.loc) for x in p.tasks), "task priority")
        for pou in p.pous:
            unique(((v.name, v.loc) for v in pou.vars), f"variable in {pou.name}")
            unique(((a.name, a.loc) for a in pou.actions), f"action in {pou.name}")
            if isinstance(pou.body, SfcBody):
                unique(((s.name, s.loc) for s in pou.body.chart.steps), f"step in {pou.name}")

    def check_tasks(self) -> None:
        for t in self.project.tasks:
            if t.cycle_time <= 0:
                raise ResolveError(f"task {t.name} needs a positive cycle time", t.loc)
            entry = self.sym.pous.get(t.entry.lower())
            if entry is None:
                raise ResolveError(f"task {t.name} references unknown POU {t.entry!r}", t.loc)
            if entry.kind is not PouKind.PROGRAM:
                raise ResolveError(f"task {t.name} entry {t.entry!r} is not a PROGRAM", t.loc)

    def check_arrays(self) -> None:
        arrays = [v for v in self.project.global_vars if v.dims is not None]
        for pou in self.project.pous:
            for v in pou.vars:
                if v.dims is not None:
                    raise ResolveError("arrays are reserved for the trace array", v.loc)
        if len(arrays) > 1:
            raise ResolveError("only one (trace) array may be declared", arrays[1].loc)
        if arrays:
            f = arrays[0].loc.file
            in_file = [p for p in self.project.pous if p.loc.file == f]
            if len(in_file) != 3:
                raise ResolveError(
                    "arrays are reserved for the trace array of an instrumented project", arrays[0].loc
                )

    def check_pou(self, pou: PouDecl) -> None:
        if pou.kind is PouKind.FUNCTION:
            if pou.actions:
                raise ResolveError(f"function {pou.name} cannot declare actions", pou.loc)
            if isinstance(pou.body, SfcBody):
                raise ResolveError(f"function {pou.name} cannot be written in SFC", pou.loc)
        for v in pou.vars:
            if v.init is not None:
                self.check_init(v)
        if isinstance(pou.body, SfcBody):
            self.check_sfc(pou)
        for _, stmts in pou_code(pou):
            self.check_stmts(pou, stmts, in_loop=False)

    def check_init(self, v: VarDecl) -> None:
        t = v.init.type
        ok = t is v.data_type or (t is DataType.INT and v.data_type in (DataType.DINT, DataType.REAL, DataType.TIME))
        if not ok:
            raise ResolveError(f"initial value of {v.name} does not match {v.data_type.value}", v.loc)

    def check_sfc(self, pou: PouDecl) -> None:
        chart = pou.body.chart
        initial = [s for s in chart.steps if s.initial]
        if len(initial) != 1:
            raise ResolveError(f"SFC in {pou.name} needs exactly one INITIAL step", pou.loc)
        names = {s.name.lower() for s in chart.steps}
        for s in chart.steps:
            for ref in s.actions:
                if ref.qualifier not in QUALIFIERS:
                    raise ResolveError(f"unsupported action qualifier {ref.qualifier!r}", s.loc)
                if pou.action(ref.action) is None:
                    raise ResolveError(f"step {s.name} references unknown action {ref.action!r}", s.loc)
        for t in chart.transitions:
            for end in (t.source, t.target):
                if end.lower() not in names:
                    raise ResolveError(f"transition references unknown step {end!r}", t.loc)
            self.check_expr(pou, t.cond, t.loc)

    def check_stmts(self, pou: PouDecl, stmts, in_loop: bool) -> None:
        for s in stmts:
            self.check_stmt(pou, s, in_loop)

    def check_stmt(self, pou: PouDecl, s: Stmt, in_loop: bool) -> None:
        loc = s.loc
        for e in header_exprs(s):
            self.check_expr(pou, e, loc)
        if isinstance(s, Assign):
            self.check_target(pou, s.target, loc, indexed=s.index is not None)
        elif isinstance(s, For):
            self.check_target(pou, s.var, loc, indexed=False)
        elif isinstance(s, CallStmt):
            self.check_call(pou, s.target, s.args, loc, statement=True)
        elif isinstance(s, Exit) and not in_loop:
            raise ResolveError("EXIT outside of a loop", loc)
        if isinstance(s, COMPOUND):
            loop = in_loop or isinstance(s, (For, While, Repeat))
            for body in arm_bodies(s):
                if body:
                    self.check_stmts(pou, body, loop)

    def check_target(self, pou: PouDecl, name: str, loc: SourceLoc, indexed: bool) -> None:
        found = self.sym.var(pou, name)
        if found is None:
            raise ResolveError(f"unresolved identifier {name!r}", loc)
        scope, decl = found
        if (decl.dims is not None) != indexed:
            raise ResolveError(f"{name!r} {'is' if decl.dims else 'is not'} an array", loc)
        if decl.storage is Storage.INPUT and (scope == "global" or pou.kind is PouKind.PROGRAM):
            raise ResolveError(f"process input {name!r} is read-only", loc)

    def check_expr(self, pou: PouDecl, e: Expr, loc: SourceLoc) -> None:
        if isinstance(e, Literal):
            return
        if isinstance(e, Name):
            found = self.sym.var(pou, e.ident)
            if found is None:
                raise ResolveError(f"unresolved identifier {e.ident!r}", loc)
            if found[1].dims is not None:
                raise ResolveError(f"array {e.ident!r} needs an index", loc)
        elif isinstance(e, Index):
            found = self.sym.var(pou, e.ident)
            if found is None or found[1].dims is None:
                raise ResolveError(f"{e.ident!r} is not an array", loc)
            self.check_expr(pou, e.index, loc)
        elif isinstance(e, Unary):
            self.check_expr(pou, e.operand, loc)
        elif isinstance(e, Binary):
            self.check_expr(pou, e.left, loc)
            self.check_expr(pou, e.right, loc)
        elif isinstance(e, CallExpr):
            for a in e.args:
                if not a.output:
                    self.check_expr(pou, a.value, loc)
            self.check_call(pou, e.target, e.args, loc, statement=False)

    def check_call(self, pou: PouDecl, target: str, args, loc: SourceLoc, statement: bool) -> None:
        found = self.sym.call(pou, target)
        if found is None:
            raise ResolveError(f"unresolved call target {target!r}", loc)
        kind, obj = found
        if kind == "builtin":
            lo, hi = BUILTINS[obj]
            if statement:
                raise ResolveError(f"result of {target} is discarded", loc)
            if any(a.name is not None for a in args) or not lo <= len(args) <= hi:
                raise ResolveError(f"{target} takes {lo} positional argument(s)", loc)
            return
        if kind == "action":
            if args or not statement:
                raise ResolveError(f"action {target} is called without arguments as a statement", loc)
            return
        callee: PouDecl = obj
        if callee.kind is not PouKind.FUNCTION and not statement:
            raise ResolveError(f"{callee.kind.value} {target} has no return value", loc)
        if callee.kind is PouKind.PROGRAM and args:
            raise ResolveError(f"program {target} takes no arguments", loc)
        inputs = callee.inputs
        positional = [a for a in args if a.name is None]
        if positional and callee.kind is not PouKind.FUNCTION:
            raise ResolveError(f"{target} needs named arguments", loc)
        if len(positional) > len(inputs):
            raise ResolveError(f"too many arguments for {target}", loc)
        if positional and len(positional) != len(args):
            raise ResolveError(f"mixed positional and named arguments in call to {target}", loc)
        seen = set()
        for a in args:
            if a.name is None:
                continue
            param = callee.var(a.name)
            want = Storage.OUTPUT if a.output else Storage.INPUT
            if param is None or param.storage is not want:
                raise ResolveError(f"{target} has no {want.value.lower()} parameter {a.name!r}", loc)
            if a.name.lower() in seen:
                raise DuplicateError(f"parameter {a.name!r} bound twice", loc)
            seen.add(a.name.lower())
            if a.output:
                self.check_target(pou, a.value.ident, loc, indexed=False)

    def check_recursion(self) -> None:
        graph: dict[tuple[str, str | None], list[tuple[tuple[str, str | None], SourceLoc]]] = {}
        for pou in self.project.pous:
            pk = pou.name.lower()
            code = list(pou_code(pou))
            for act_name, stmts in code:
                node = (pk, act_name.lower() if act_name else None)
                edges = graph.setdefault(node, [])
                for s in walk_stmts(stmts):
                    for target in stmt_call_targets(s):
                        edges.extend(self._call_edge(pou, target, s.loc))
            if isinstance(pou.body, SfcBody):
                edges = graph.setdefault((pk, None), [])
                for step in pou.body.chart.steps:
                    for ref in step.actions:
                        edges.append(((pk, ref.action.lower()), step.loc))
                for t in pou.body.chart.transitions:
                    for c in expr_calls(t.cond):
                        edges.extend(self._call_edge(pou, c.target, t.loc))
        state: dict = {}

        def visit(node, path):
            state[node] = 1
            for nxt, loc in graph.get(node, ()):
                if state.get(nxt) == 1:
                    chain = " -> ".join(_label(n) for n in path + [node, nxt])
                    raise RecursionError_(f"recursive call chain {chain}", loc)
                if nxt not in state:
                    visit(nxt, path + [node])
            state[node] = 2

        for node in list(graph):
            if node not in state:
                visit(node, [])

    def _call_edge(self, pou, target, loc):
        found = self.sym.call(pou, target)
        if found is None or found[0] == "builtin":
            return []
        kind, obj = found
        if kind == "action":
            return [((pou.name.lower(), obj.name.lower()), loc)]
        return [((obj.name.lower(), None), loc)]


def _label(node) -> str:
    pou, act = node
    return f"{pou}.{act}" if act else pou


def resolve(project: SourceProject) -> None:
    Resolver(project).run()
