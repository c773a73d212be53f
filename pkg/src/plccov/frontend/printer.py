"""Canonical source emitter.

Output reparses to an equal tree.  Statement bodies of a POU start at column 1,
nested bodies are indented by four spaces.  Calls to the trace recorder are
written on the same line as the statement they precede, so instrumenting a
file never moves original statements to other lines.
"""

from __future__ import annotations

from .ast import (
    Arg,
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
    Return,
    SfcBody,
    SourceProject,
    Stmt,
    Storage,
    TaskDecl,
    Unary,
    VarDecl,
    While,
)

_PREC = {
    "OR": 1, "XOR": 2, "AND": 3, "=": 4, "<>": 4,
    "<": 5, ">": 5, "<=": 5, ">=": 5, "+": 6, "-": 6, "*": 7, "/": 7, "MOD": 7,
}  # fmt: skip
_UNARY_PREC = 8
INDENT = "    "


def format_real(v: float) -> str:
    text = repr(float(v))
    if "e" in text and "." not in text.split("e")[0]:
        mant, exp = text.split("e")
        text = f"{mant}.0e{exp}"
    elif "." not in text and "e" not in text:
        text += ".0"
    return text


def format_literal(lit: Literal) -> str:
    v = lit.value
    if lit.type is DataType.BOOL:
        return "TRUE" if v else "FALSE"
    if lit.type is DataType.REAL:
        return format_real(v)
    if lit.type is DataType.TIME:
        return f"T#{v}ms"
    if lit.type is DataType.STRING:
        out = str(v).replace("$", "$$").replace("'", "$'").replace("\n", "$N").replace("\t", "$T")
        return f"'{out.replace(chr(13), '$R')}'"
    return str(v)


def format_args(args: tuple[Arg, ...]) -> str:
    parts = []
    for a in args:
        if a.name is None:
            parts.append(format_expr(a.value))
        elif a.output:
            parts.append(f"{a.name}=>{format_expr(a.value)}")
        else:
            parts.append(f"{a.name}:={format_expr(a.value)}")
    return ", ".join(parts)


def format_expr(e: Expr, ctx: int = 0) -> str:
    if isinstance(e, Literal):
        text = format_literal(e)
        if text.startswith("-") and ctx >= _UNARY_PREC:
            return f"({text})"
        return text
    if isinstance(e, Name):
        return e.ident
    if isinstance(e, Index):
        return f"{e.ident}[{format_expr(e.index)}]"
    if isinstance(e, CallExpr):
        return f"{e.target}({format_args(e.args)})"
    if isinstance(e, Unary):
        inner = format_expr(e.operand, _UNARY_PREC)
        if e.op == "NOT":
            text = f"NOT {inner}"
        else:
            text = f"- {inner}" if inner.startswith("-") else f"-{inner}"
        return f"({text})" if _UNARY_PREC < ctx else text
    if isinstance(e, Binary):
        p = _PREC[e.op]
        text = f"{format_expr(e.left, p)} {e.op} {format_expr(e.right, p + 1)}"
        return f"({text})" if p < ctx else text
    raise TypeError(f"not an expression: {e!r}")


def format_labels(labels) -> str:
    return ", ".join(str(lo) if lo == hi else f"{lo}..{hi}" for lo, hi in labels)


class Printer:
    def __init__(self, probe: str | None = None):
        self.probe = probe.lower() if probe else None
        self.lines: list[str] = []

    def is_probe(self, s: Stmt) -> bool:
        return self.probe is not None and isinstance(s, CallStmt) and s.target.lower() == self.probe

    def emit(self, depth: int, text: str) -> None:
        self.lines.append(INDENT * depth + text)

    def stmts(self, stmts, depth: int) -> None:
        prefix = ""
        for i, s in enumerate(stmts):
            if self.is_probe(s) and i + 1 < len(stmts):
                prefix += self.simple(s) + " "
                continue
            start = len(self.lines)
            self.stmt(s, depth)
            if prefix:
                first = self.lines[start]
                self.lines[start] = INDENT * depth + prefix + first[len(INDENT) * depth :]
                prefix = ""

    def simple(self, s: Stmt) -> str:
        if isinstance(s, Assign):
            target = s.target if s.index is None else f"{s.target}[{format_expr(s.index)}]"
            return f"{target} := {format_expr(s.value)};"
        if isinstance(s, CallStmt):
            return f"{s.target}({format_args(s.args)});"
        if isinstance(s, Return):
            return "RETURN;"
        if isinstance(s, Exit):
            return "EXIT;"
        raise TypeError(s)

    def stmt(self, s: Stmt, depth: int) -> None:
        if isinstance(s, If):
            for k, (cond, body) in enumerate(s.branches):
                self.emit(depth, f"{'IF' if k == 0 else 'ELSIF'} {format_expr(cond)} THEN")
                self.stmts(body, depth + 1)
            if s.else_body is not None:
                self.emit(depth, "ELSE")
                self.stmts(s.else_body, depth + 1)
            self.emit(depth, "END_IF;")
        elif isinstance(s, Case):
            self.emit(depth, f"CASE {format_expr(s.selector)} OF")
            for arm in s.arms:
                self.emit(depth, f"{format_labels(arm.labels)}:")
                self.stmts(arm.body, depth + 1)
            if s.else_body is not None:
                self.emit(depth, "ELSE")
                self.stmts(s.else_body, depth + 1)
            self.emit(depth, "END_CASE;")
        elif isinstance(s, For):
            by = f" BY {format_expr(s.step)}" if s.step is not None else ""
            self.emit(depth, f"FOR {s.var} := {format_expr(s.start)} TO {format_expr(s.stop)}{by} DO")
            self.stmts(s.body, depth + 1)
            self.emit(depth, "END_FOR;")
        elif isinstance(s, While):
            self.emit(depth, f"WHILE {format_expr(s.cond)} DO")
            self.stmts(s.body, depth + 1)
            self.emit(depth, "END_WHILE;")
        elif isinstance(s, Repeat):
            self.emit(depth, "REPEAT")
            self.stmts(s.body, depth + 1)
            self.emit(depth, f"UNTIL {format_expr(s.until)}")
            self.emit(depth, "END_REPEAT;")
        else:
            self.emit(depth, self.simple(s))

    def var_decl(self, v: VarDecl, global_level: bool) -> str:
        at = ""
        if global_level and v.storage is Storage.INPUT:
            at = " AT %I*"
        elif global_level and v.storage is Storage.OUTPUT:
            at = " AT %Q*"
        t = v.data_type.value
        if v.dims is not None:
            t = f"ARRAY[{v.dims[0]}..{v.dims[1]}] OF {t}"
        init = f" := {format_literal(v.init)}" if v.init is not None else ""
        return f"{v.name}{at} : {t}{init};"

    def globals_block(self, vars_) -> None:
        self.emit(0, "VAR_GLOBAL")
        for v in vars_:
            self.emit(1, self.var_decl(v, True))
        self.emit(0, "END_VAR")

    def pou(self, p: PouDecl) -> None:
        head = f"{p.kind.value} {p.name}"
        if p.kind is PouKind.FUNCTION:
            head += f" : {p.return_type.value}"
        self.emit(0, head)
        section = None
        for v in p.vars:
            want = {Storage.INPUT: "VAR_INPUT", Storage.OUTPUT: "VAR_OUTPUT"}.get(v.storage, "VAR")
            if want != section:
                if section is not None:
                    self.emit(0, "END_VAR")
                self.emit(0, want)
                section = want
            self.emit(1, self.var_decl(v, False))
        if section is not None:
            self.emit(0, "END_VAR")
        if isinstance(p.body, SfcBody):
            chart = p.body.chart
            for step in chart.steps:
                self.emit(0, f"STEP {step.name}{' INITIAL' if step.initial else ''}")
                for ref in step.actions:
                    self.emit(1, f"ACTION {ref.action} QUALIFIER {ref.qualifier};")
                self.emit(0, "END_STEP")
            for t in chart.transitions:
                self.emit(0, f"TRANSITION FROM {t.source} TO {t.target} WHEN {format_expr(t.cond)} END_TRANSITION")
        else:
            self.stmts(p.body.stmts, 0)
        for act in p.actions:
            self.emit(0, f"ACTION {act.name}:")
            self.stmts(act.body, 1)
            self.emit(0, "END_ACTION")
        self.emit(0, f"END_{p.kind.value}")

    def task(self, t: TaskDecl) -> None:
        self.emit(0, f"TASK {t.name} (INTERVAL := T#{t.cycle_time}ms, PRIORITY := {t.priority}) : {t.entry};")


def pretty_print(project: SourceProject) -> list[tuple[str, str]]:
    """Render every file of ``project``; declarations go back to the file they came from."""
    from ..instrument import detect_trace_names  # runtime import: instrument depends on frontend

    names = detect_trace_names(project)
    out = []
    for path, _ in project.files:
        pr = Printer(names.record if names else None)
        gl = [v for v in project.global_vars if v.loc.file == path]
        chunks = 0
        if gl:
            pr.globals_block(gl)
            chunks += 1
        for p in project.pous:
            if p.loc.file == path:
                if chunks:
                    pr.emit(0, "")
                pr.pou(p)
                chunks += 1
        for t in project.tasks:
            if t.loc.file == path:
                if chunks:
                    pr.emit(0, "")
                pr.task(t)
                chunks += 1
        text = "\n".join(pr.lines)
        out.append((path, text + "\n" if text else ""))
    return out
