"""Typed syntax tree for the Structured Text / textual SFC dialect.

All nodes are frozen dataclasses built from tuples, so trees are hashable and
safe to share.  Source locations never take part in equality: two trees that
differ only in layout compare equal.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Union


@dataclass(frozen=True, order=True)
class SourceLoc:
    file: str
    line: int
    col: int

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.col}"


NOLOC = SourceLoc("<none>", 0, 0)


def _loc() -> SourceLoc:
    return field(default=NOLOC, compare=False, repr=False)


class DataType(str, enum.Enum):
    BOOL = "BOOL"
    INT = "INT"
    DINT = "DINT"
    REAL = "REAL"
    TIME = "TIME"
    STRING = "STRING"


class Storage(str, enum.Enum):
    INPUT = "Input"
    OUTPUT = "Output"
    LOCAL = "Local"
    GLOBAL = "Global"


class PouKind(str, enum.Enum):
    PROGRAM = "PROGRAM"
    FUNCTION_BLOCK = "FUNCTION_BLOCK"
    FUNCTION = "FUNCTION"


# -- expressions -------------------------------------------------------------


@dataclass(frozen=True)
class Literal:
    value: object
    type: DataType


@dataclass(frozen=True)
class Name:
    ident: str


@dataclass(frozen=True)
class Index:
    """Element access; only the generated trace array is indexable."""

    ident: str
    index: Expr


@dataclass(frozen=True)
class Unary:
    op: str  # "-" or "NOT"
    operand: Expr


@dataclass(frozen=True)
class Binary:
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Arg:
    """Call argument: positional (name None), ``name := value`` or ``name => target``."""

    name: str | None
    value: Expr
    output: bool = False


@dataclass(frozen=True)
class CallExpr:
    target: str
    args: tuple[Arg, ...] = ()


Expr = Union[Literal, Name, Index, Unary, Binary, CallExpr]


# -- statements --------------------------------------------------------------


@dataclass(frozen=True)
class Assign:
    target: str
    value: Expr
    index: Expr | None = None
    loc: SourceLoc = _loc()


@dataclass(frozen=True)
class If:
    branches: tuple[tuple[Expr, tuple[Stmt, ...]], ...]
    else_body: tuple[Stmt, ...] | None = None
    loc: SourceLoc = _loc()


@dataclass(frozen=True)
class CaseArm:
    labels: tuple[tuple[int, int], ...]  # inclusive ranges; single labels have lo == hi
    body: tuple[Stmt, ...]


@dataclass(frozen=True)
class Case:
    selector: Expr
    arms: tuple[CaseArm, ...]
    else_body: tuple[Stmt, ...] | None = None
    loc: SourceLoc = _loc()


@dataclass(frozen=True)
class For:
    var: str
    start: Expr
    stop: Expr
    step: Expr | None
    body: tuple[Stmt, ...]
    loc: SourceLoc = _loc()


@dataclass(frozen=True)
class While:
    cond: Expr
    body: tuple[Stmt, ...]
    loc: SourceLoc = _loc()


@dataclass(frozen=True)
class Repeat:
    body: tuple[Stmt, ...]
    until: Expr
    loc: SourceLoc = _loc()


@dataclass(frozen=True)
class CallStmt:
    target: str
    args: tuple[Arg, ...] = ()
    loc: SourceLoc = _loc()


@dataclass(frozen=True)
class Return:
    loc: SourceLoc = _loc()


@dataclass(frozen=True)
class Exit:
    loc: SourceLoc = _loc()


Stmt = Union[Assign, If, Case, For, While, Repeat, CallStmt, Return, Exit]
COMPOUND = (If, Case, For, While, Repeat)


def arm_bodies(stmt: Stmt) -> tuple[tuple[Stmt, ...] | None, ...]:
    """Nested statement lists of a compound statement, in arm order.

    IF: one entry per condition branch then the else body (None when absent).
    CASE: one per arm then the else body.  Loops: just the body.
    """
    if isinstance(stmt, If):
        return tuple(body for _, body in stmt.branches) + (stmt.else_body,)
    if isinstance(stmt, Case):
        return tuple(arm.body for arm in stmt.arms) + (stmt.else_body,)
    if isinstance(stmt, (For, While, Repeat)):
        return (stmt.body,)
    return ()


# -- declarations ------------------------------------------------------------


@dataclass(frozen=True)
class VarDecl:
    name: str
    data_type: DataType
    storage: Storage
    init: Literal | None = None
    dims: tuple[int, int] | None = None  # ARRAY[lo..hi] OF BOOL, trace array only
    loc: SourceLoc = _loc()


@dataclass(frozen=True)
class ActionDecl:
    name: str
    body: tuple[Stmt, ...]
    loc: SourceLoc = _loc()


@dataclass(frozen=True)
class StepAction:
    action: str
    qualifier: str  # N, P1 or P0


@dataclass(frozen=True)
class Step:
    name: str
    initial: bool
    actions: tuple[StepAction, ...] = ()
    loc: SourceLoc = _loc()


@dataclass(frozen=True)
class Transition:
    source: str
    target: str
    cond: Expr
    loc: SourceLoc = _loc()


@dataclass(frozen=True)
class SfcChart:
    steps: tuple[Step, ...]
    transitions: tuple[Transition, ...]

    def step(self, name: str) -> Step:
        key = name.lower()
        for s in self.steps:
            if s.name.lower() == key:
                return s
        raise KeyError(name)

    @property
    def initial(self) -> Step:
        return next(s for s in self.steps if s.initial)


@dataclass(frozen=True)
class StBody:
    stmts: tuple[Stmt, ...] = ()


@dataclass(frozen=True)
class SfcBody:
    chart: SfcChart


Body = Union[StBody, SfcBody]


@dataclass(frozen=True)
class PouDecl:
    name: str
    kind: PouKind
    vars: tuple[VarDecl, ...] = ()
    body: Body = StBody()
    actions: tuple[ActionDecl, ...] = ()
    return_type: DataType | None = None
    loc: SourceLoc = _loc()

    def action(self, name: str) -> ActionDecl | None:
        key = name.lower()
        for a in self.actions:
            if a.name.lower() == key:
                return a
        return None

    def var(self, name: str) -> VarDecl | None:
        key = name.lower()
        for v in self.vars:
            if v.name.lower() == key:
                return v
        return None

    @property
    def inputs(self) -> tuple[VarDecl, ...]:
        return tuple(v for v in self.vars if v.storage is Storage.INPUT)

    @property
    def is_sfc(self) -> bool:
        return isinstance(self.body, SfcBody)


@dataclass(frozen=True)
class TaskDecl:
    name: str
    cycle_time: int  # milliseconds
    priority: int
    entry: str
    loc: SourceLoc = _loc()


@dataclass(frozen=True)
class SourceProject:
    pous: tuple[PouDecl, ...] = ()
    tasks: tuple[TaskDecl, ...] = ()
    global_vars: tuple[VarDecl, ...] = ()
    files: tuple[tuple[str, str], ...] = field(default=(), compare=False, repr=False)

    def pou(self, name: str) -> PouDecl | None:
        key = name.lower()
        for p in self.pous:
            if p.name.lower() == key:
                return p
        return None

    def global_var(self, name: str) -> VarDecl | None:
        key = name.lower()
        for v in self.global_vars:
            if v.name.lower() == key:
                return v
        return None
