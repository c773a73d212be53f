"""Recursive-descent parser for the ST subset and the textual SFC notation.

File grammar (informal)::

    file      := { VAR_GLOBAL {var} END_VAR | pou | task }
    pou       := PROGRAM name sections body {action} END_PROGRAM
               | FUNCTION_BLOCK name sections body {action} END_FUNCTION_BLOCK
               | FUNCTION name ':' type sections body END_FUNCTION
    body      := { STEP .. END_STEP | TRANSITION .. END_TRANSITION } | stmts
    action    := ACTION name ':' stmts END_ACTION
    task      := TASK name '(' INTERVAL ':=' T#.. ',' PRIORITY ':=' int ')' ':' program ';'
"""

from __future__ import annotations

from .ast import (
    ActionDecl,
    Arg,
    Assign,
    Binary,
    CallExpr,
    CallStmt,
    Case,
    CaseArm,
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
    SfcChart,
    StBody,
    Step,
    StepAction,
    Stmt,
    Storage,
    TaskDecl,
    Transition,
    Unary,
    VarDecl,
    While,
)
from .errors import ParseError
from .lexer import Token, tokenize

_TYPES = {t.value: t for t in DataType}
_SECTION_STORAGE = {"VAR": Storage.LOCAL, "VAR_INPUT": Storage.INPUT, "VAR_OUTPUT": Storage.OUTPUT}
_POU_END = {
    "PROGRAM": "END_PROGRAM",
    "FUNCTION_BLOCK": "END_FUNCTION_BLOCK",
    "FUNCTION": "END_FUNCTION",
}
_STMT_END = {
    "END_IF", "ELSIF", "ELSE", "END_CASE", "END_FOR", "END_WHILE", "UNTIL",
    "END_ACTION", "END_PROGRAM", "END_FUNCTION_BLOCK", "END_FUNCTION", "ACTION",
}  # fmt: skip

# binary precedence, loosest first
_LEVELS: tuple[tuple[str, ...], ...] = (
    ("OR",),
    ("XOR",),
    ("AND",),
    ("=", "<>"),
    ("<", ">", "<=", ">="),
    ("+", "-"),
    ("*", "/", "MOD"),
)


class FileParser:
    def __init__(self, text: str, path: str):
        self.path = path
        self.toks = tokenize(text, path)
        self.i = 0

    # -- token helpers ---------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, value: str) -> bool:
        t = self.tok
        return t.kind in ("kw", "op") and t.value == value

    def accept(self, value: str) -> bool:
        if self.at(value):
            self.i += 1
            return True
        return False

    def expect(self, value: str) -> Token:
        if not self.at(value):
            self.fail(f"expected {value!r}")
        t = self.tok
        self.i += 1
        return t

    def ident(self) -> str:
        t = self.tok
        if t.kind != "ident":
            self.fail("expected identifier")
        self.i += 1
        return t.value

    def fail(self, message: str):
        t = self.tok
        found = "end of file" if t.kind == "eof" else repr(t.text)
        raise ParseError(f"{message}, found {found}", t.loc)

    # -- top level -------------------------------------------------------

    def parse_file(self):
        pous: list[PouDecl] = []
        globals_: list[VarDecl] = []
        tasks: list[TaskDecl] = []
        while self.tok.kind != "eof":
            if self.accept("VAR_GLOBAL"):
                while not self.accept("END_VAR"):
                    globals_.append(self.var_decl(Storage.GLOBAL, global_level=True))
            elif self.tok.value in _POU_END and self.tok.kind == "kw":
                pous.append(self.pou())
            elif self.at("TASK"):
                tasks.append(self.task())
            else:
                self.fail("expected VAR_GLOBAL, a POU or TASK declaration")
        return pous, globals_, tasks

    def task(self) -> TaskDecl:
        loc = self.expect("TASK").loc
        name = self.ident()
        self.expect("(")
        fields: dict[str, Token] = {}
        while True:
            key = self.ident().upper()
            if key not in ("INTERVAL", "PRIORITY") or key in fields:
                raise ParseError(f"unexpected task attribute {key}", loc)
            self.expect(":=")
            fields[key] = self.tok
            self.i += 1
            if not self.accept(","):
                break
        self.expect(")")
        self.expect(":")
        entry = self.ident()
        self.expect(";")
        interval, prio = fields.get("INTERVAL"), fields.get("PRIORITY")
        if interval is None or interval.kind != "time" or prio is None or prio.kind != "int":
            raise ParseError("TASK needs INTERVAL := T#.. and PRIORITY := <int>", loc)
        return TaskDecl(name, interval.value, prio.value, entry, loc=loc)

    def pou(self) -> PouDecl:
        head = self.tok
        self.i += 1
        kind = PouKind(head.value)
        name = self.ident()
        return_type = None
        if kind is PouKind.FUNCTION:
            self.expect(":")
            return_type, dims = self.data_type()
            if dims:
                raise ParseError("functions cannot return arrays", head.loc)
        vars_: list[VarDecl] = []
        while self.tok.kind == "kw" and self.tok.value in _SECTION_STORAGE:
            storage = _SECTION_STORAGE[self.tok.value]
            self.i += 1
            while not self.accept("END_VAR"):
                vars_.append(self.var_decl(storage, global_level=False))
        if self.at("STEP") or self.at("TRANSITION"):
            body = SfcBody(self.sfc_chart(head))
        else:
            body = StBody(self.stmt_list())
        actions: list[ActionDecl] = []
        while self.at("ACTION"):
            aloc = self.expect("ACTION").loc
            aname = self.ident()
            self.expect(":")
            stmts = self.stmt_list()
            self.expect("END_ACTION")
            self.accept(";")
            actions.append(ActionDecl(aname, stmts, loc=aloc))
        self.expect(_POU_END[kind.value])
        self.accept(";")
        return PouDecl(name, kind, tuple(vars_), body, tuple(actions), return_type, loc=head.loc)

    def data_type(self) -> tuple[DataType, tuple[int, int] | None]:
        if self.accept("ARRAY"):
            self.expect("[")
            lo = self.signed_int()
            self.expect("..")
            hi = self.signed_int()
            self.expect("]")
            self.expect("OF")
            t, _ = self.data_type()
            if t is not DataType.BOOL:
                self.fail("only ARRAY OF BOOL is supported")
            return t, (lo, hi)
        t = self.tok
        if t.kind == "kw" and t.value in _TYPES:
            self.i += 1
            return _TYPES[t.value], None
        self.fail("expected data type")

    def signed_int(self) -> int:
        neg = self.accept("-")
        t = self.tok
        if t.kind != "int":
            self.fail("expected integer")
        self.i += 1
        return -t.value if neg else t.value

    def var_decl(self, storage: Storage, global_level: bool) -> VarDecl:
        loc = self.tok.loc
        name = self.ident()
        if global_level and self.accept("AT"):
            t = self.tok
            if t.kind != "direct":
                self.fail("expected %I* or %Q*")
            self.i += 1
            storage = Storage.INPUT if t.value == "%I*" else Storage.OUTPUT
        self.expect(":")
        dtype, dims = self.data_type()
        init = None
        if self.accept(":="):
            init = self.init_literal(dtype)
        self.expect(";")
        return VarDecl(name, dtype, storage, init, dims, loc=loc)

    def init_literal(self, dtype: DataType) -> Literal:
        neg = self.accept("-")
        t = self.tok
        self.i += 1
        if t.kind == "kw" and t.value in ("TRUE", "FALSE") and not neg:
            return Literal(t.value == "TRUE", DataType.BOOL)
        if t.kind == "int":
            return Literal(-t.value if neg else t.value, DataType.INT)
        if t.kind == "real":
            return Literal(-t.value if neg else t.value, DataType.REAL)
        if t.kind == "time" and not neg:
            return Literal(t.value, DataType.TIME)
        if t.kind == "string" and not neg:
            return Literal(t.value, DataType.STRING)
        self.i -= 1
        self.fail("expected literal initial value")

    # -- SFC -------------------------------------------------------------

    def sfc_chart(self, head: Token) -> SfcChart:
        steps: list[Step] = []
        transitions: list[Transition] = []
        while True:
            if self.at("STEP"):
                loc = self.expect("STEP").loc
                name = self.ident()
                initial = self.accept("INITIAL")
                refs: list[StepAction] = []
                while self.accept("ACTION"):
                    aname = self.ident()
                    self.expect("QUALIFIER")
                    q = self.tok
                    if q.kind not in ("ident", "int"):
                        self.fail("expected action qualifier")
                    self.i += 1
                    refs.append(StepAction(aname, q.text.upper()))
                    self.accept(";")
                self.expect("END_STEP")
                self.accept(";")
                steps.append(Step(name, initial, tuple(refs), loc=loc))
            elif self.at("TRANSITION"):
                loc = self.expect("TRANSITION").loc
                self.expect("FROM")
                src = self.ident()
                self.expect("TO")
                dst = self.ident()
                self.expect("WHEN")
                cond = self.expr()
                self.expect("END_TRANSITION")
                self.accept(";")
                transitions.append(Transition(src, dst, cond, loc=loc))
            else:
                break
        return SfcChart(tuple(steps), tuple(transitions))

    # -- statements ------------------------------------------------------

    def stmt_list(self) -> tuple[Stmt, ...]:
        out: list[Stmt] = []
        while True:
            t = self.tok
            if t.kind == "eof" or (t.kind == "kw" and t.value in _STMT_END):
                break
            if t.kind == "int" or self.at("-"):
                break  # next CASE arm label
            if self.accept(";"):
                continue
            out.append(self.stmt())
        return tuple(out)

    def stmt(self) -> Stmt:
        t = self.tok
        loc = t.loc
        if t.kind == "kw":
            kw = t.value
            if kw == "IF":
                return self.if_stmt()
            if kw == "CASE":
                return self.case_stmt()
            if kw == "FOR":
                self.i += 1
                var = self.ident()
                self.expect(":=")
                start = self.expr()
                self.expect("TO")
                stop = self.expr()
                step = self.expr() if self.accept("BY") else None
                self.expect("DO")
                body = self.stmt_list()
                self.expect("END_FOR")
                self.accept(";")
                return For(var, start, stop, step, body, loc=loc)
            if kw == "WHILE":
                self.i += 1
                cond = self.expr()
                self.expect("DO")
                body = self.stmt_list()
                self.expect("END_WHILE")
                self.accept(";")
                return While(cond, body, loc=loc)
            if kw == "REPEAT":
                self.i += 1
                body = self.stmt_list()
                self.expect("UNTIL")
                cond = self.expr()
                self.expect("END_REPEAT")
                self.accept(";")
                return Repeat(body, cond, loc=loc)
            if kw == "RETURN":
                self.i += 1
                self.expect(";")
                return Return(loc=loc)
            if kw == "EXIT":
                self.i += 1
                self.expect(";")
                return Exit(loc=loc)
            self.fail("expected statement")
        name = self.ident()
        if self.accept("("):
            args = self.args()
            self.expect(";")
            return CallStmt(name, args, loc=loc)
        index = None
        if self.accept("["):
            index = self.expr()
            self.expect("]")
        self.expect(":=")
        value = self.expr()
        self.expect(";")
        return Assign(name, value, index, loc=loc)

    def if_stmt(self) -> If:
        loc = self.expect("IF").loc
        branches = []
        cond = self.expr()
        self.expect("THEN")
        branches.append((cond, self.stmt_list()))
        while self.accept("ELSIF"):
            cond = self.expr()
            self.expect("THEN")
            branches.append((cond, self.stmt_list()))
        else_body = self.stmt_list() if self.accept("ELSE") else None
        self.expect("END_IF")
        self.accept(";")
        return If(tuple(branches), else_body, loc=loc)

    def case_stmt(self) -> Case:
        loc = self.expect("CASE").loc
        selector = self.expr()
        self.expect("OF")
        arms = []
        while self.tok.kind == "int" or self.at("-"):
            labels = []
            while True:
                lo = self.signed_int()
                hi = self.signed_int() if self.accept("..") else lo
                if hi < lo:
                    self.fail("empty CASE label range")
                labels.append((lo, hi))
                if not self.accept(","):
                    break
            self.expect(":")
            arms.append(CaseArm(tuple(labels), self.stmt_list()))
        else_body = self.stmt_list() if self.accept("ELSE") else None
        self.expect("END_CASE")
        self.accept(";")
        return Case(selector, tuple(arms), else_body, loc=loc)

    def args(self) -> tuple[Arg, ...]:
        out: list[Arg] = []
        if self.accept(")"):
            return ()
        while True:
            if self.tok.kind == "ident" and self.peek().kind == "op" and self.peek().value in (":=", "=>"):
                name = self.ident()
                if self.accept("=>"):
                    out.append(Arg(name, Name(self.ident()), output=True))
                else:
                    self.expect(":=")
                    out.append(Arg(name, self.expr()))
            else:
                out.append(Arg(None, self.expr()))
            if not self.accept(","):
                break
        self.expect(")")
        return tuple(out)

    # -- expressions -----------------------------------------------------

    def expr(self, level: int = 0) -> Expr:
        if level == len(_LEVELS):
            return self.unary()
        ops = _LEVELS[level]
        left = self.expr(level + 1)
        while self.tok.kind in ("kw", "op") and self.tok.value in ops:
            op = self.tok.value
            self.i += 1
            left = Binary(op, left, self.expr(level + 1))
        return left

    def unary(self) -> Expr:
        if self.accept("-"):
            return Unary("-", self.unary())
        if self.accept("NOT"):
            return Unary("NOT", self.unary())
        if self.accept("+"):
            return self.unary()
        return self.primary()

    def primary(self) -> Expr:
        t = self.tok
        if t.kind == "int":
            self.i += 1
            return Literal(t.value, DataType.INT)
        if t.kind == "real":
            self.i += 1
            return Literal(t.value, DataType.REAL)
        if t.kind == "time":
            self.i += 1
            return Literal(t.value, DataType.TIME)
        if t.kind == "string":
            self.i += 1
            return Literal(t.value, DataType.STRING)
        if self.accept("TRUE"):
            return Literal(True, DataType.BOOL)
        if self.accept("FALSE"):
            return Literal(False, DataType.BOOL)
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "kw" and t.value == "TIME" and self.peek().kind == "op" and self.peek().value == "(":
            self.i += 2
            return CallExpr("TIME", self.args())
        if t.kind == "ident":
            self.i += 1
            if self.accept("("):
                return CallExpr(t.value, self.args())
            if self.accept("["):
                idx = self.expr()
                self.expect("]")
                return Index(t.value, idx)
            return Name(t.value)
        self.fail("expected expression")


def parse_file(text: str, path: str):
    """Parse one source file into ``(pous, global_vars, tasks)`` without resolving names."""
    return FileParser(text, path).parse_file()


def parse_expression(text: str, path: str = "<expr>") -> Expr:
    p = FileParser(text, path)
    e = p.expr()
    if p.tok.kind != "eof":
        p.fail("trailing input after expression")
    return e
