"""Deterministic scan-cycle interpreter.

The project is compiled once into Python closures.  A cycle latches the input
image, runs every task that is due on the current tick in priority order, then
publishes the output image and advances a pending trace save by one step.

All variables live in one flat slot list.  Function frames can be static
because recursion is rejected by the frontend; a function's slots are simply
re-initialised at every call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import reduce
from pathlib import Path

from .frontend.ast import (
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
    SourceLoc,
    SourceProject,
    Stmt,
    Storage,
    TaskDecl,
    Unary,
    VarDecl,
    While,
)
from .frontend.lexer import parse_time
from .frontend.resolve import Symbols
from .instrument import TraceNames, detect_trace_names

EXIT, RETURN = 1, 2
MAX_SAVE_CYCLES = 10
POINTS_PER_SAVE_CYCLE = 256


class RuntimeFault(Exception):
    def __init__(self, message: str, loc: SourceLoc | None = None):
        where = f"{loc.file}:{loc.line}:{loc.col}: " if loc is not None and loc.line else ""
        super().__init__(where + message)
        self.loc = loc


class SaveInProgress(RuntimeFault):
    pass


# -- values -------------------------------------------------------------------

_DEFAULTS = {
    DataType.BOOL: False,
    DataType.INT: 0,
    DataType.DINT: 0,
    DataType.REAL: 0.0,
    DataType.TIME: 0,
    DataType.STRING: "",
}


def _wrap(bits: int):
    mod, half = 1 << bits, 1 << (bits - 1)

    def coerce(v):
        return ((int(v) + half) % mod) - half

    return coerce


COERCE = {
    DataType.BOOL: bool,
    DataType.INT: _wrap(16),
    DataType.DINT: _wrap(32),
    DataType.TIME: _wrap(32),
    DataType.REAL: float,
    DataType.STRING: str,
}


def default_value(v: VarDecl):
    return COERCE[v.data_type](v.init.value) if v.init is not None else _DEFAULTS[v.data_type]


def parse_value(text: str, dtype: DataType):
    """Parse a textual value (as written in test suites) for a variable of ``dtype``."""
    t = text.strip()
    if dtype is DataType.BOOL:
        up = t.upper()
        if up in ("TRUE", "1"):
            return True
        if up in ("FALSE", "0"):
            return False
        raise ValueError(f"not a BOOL: {text!r}")
    if dtype is DataType.TIME:
        if t.upper().startswith(("T#", "TIME#")):
            return COERCE[dtype](parse_time(t))
        return COERCE[dtype](int(t))
    if dtype is DataType.REAL:
        return float(t)
    if dtype is DataType.STRING:
        return t[1:-1] if len(t) >= 2 and t[0] == t[-1] == "'" else t
    if "#" in t:
        sign = -1 if t.startswith("-") else 1
        base, digits = t.lstrip("+-").replace("_", "").split("#", 1)
        return COERCE[dtype](sign * int(digits, int(base)))
    return COERCE[dtype](int(t.replace("_", "")))


def format_value(v, dtype: DataType | None = None) -> str:
    if isinstance(v, bool):
        return "TRUE" if v else "FALSE"
    if dtype is DataType.TIME:
        return f"T#{v}ms"
    return str(v)


# -- trace file format --------------------------------------------------------


def format_trace(visits) -> str:
    """``{42: True, 43: False}`` (or a list indexed by id) → ``"42:true, 43:false"``."""
    items = sorted(visits.items()) if isinstance(visits, dict) else enumerate(visits)
    return ", ".join(f"{i}:{'true' if v else 'false'}" for i, v in items)


# -- configuration and state ---------------------------------------------------


@dataclass(frozen=True)
class ScanConfig:
    tasks: tuple[TaskDecl, ...]
    base_tick: int
    max_cycles: int | None = None
    loop_limit: int = 100_000
    save_dir: str | None = None
    statement_log: bool = True

    def __post_init__(self):
        if self.base_tick <= 0 or any(t.cycle_time % self.base_tick for t in self.tasks):
            raise ValueError("every task cycle time must be a multiple of base_tick")

    @classmethod
    def for_project(cls, project: SourceProject, **kw) -> ScanConfig:
        times = [t.cycle_time for t in project.tasks]
        tick = reduce(math.gcd, times) if times else 1
        return cls(tuple(project.tasks), tick, **kw)


@dataclass
class SaveOp:
    filename: str
    snapshot: tuple[bool, ...]
    cycles_needed: int
    progress: int = 0
    done: bool = False

    def text(self) -> str:
        return format_trace(self.snapshot)


def save_cycles(points: int) -> int:
    return max(1, min(MAX_SAVE_CYCLES, math.ceil(points / POINTS_PER_SAVE_CYCLE)))


@dataclass
class PlcState:
    machine: Machine
    config: ScanConfig
    input_image: dict[str, object] = field(default_factory=dict)
    output_image: dict[str, object] = field(default_factory=dict)
    tpa: list[bool] = field(default_factory=list)
    pending_save: SaveOp | None = None
    last_save: SaveOp | None = None
    saved_files: dict[str, str] = field(default_factory=dict)
    cycle_counter: int = 0
    time_ms: int = 0
    task_phase: dict[str, int] = field(default_factory=dict)
    stmt_log: set = field(default_factory=set)
    step_log: set = field(default_factory=set)

    @property
    def vars(self) -> dict[str, object]:
        return self.machine.snapshot()

    @property
    def sfc_state(self) -> dict[str, tuple[str, bool]]:
        """Per chart: (active step, P1 pending)."""
        return {c.pou: (c.steps[c.active].name, c.p1_pending) for c in self.machine.charts}

    @property
    def trace_names(self) -> TraceNames | None:
        return self.machine.names


# -- compiler ------------------------------------------------------------------


@dataclass
class _Slot:
    index: int
    decl: VarDecl


class _Chart:
    """Run-time state and compiled parts of one SFC chart."""

    def __init__(self, pou: str, steps, transitions, step_ids):
        self.pou = pou
        self.steps = steps
        self.initial = next(i for i, s in enumerate(steps) if s.initial)
        # per step: (P1 actions, N actions, P0 actions), outgoing [(cond, target)]
        self.actions: list[tuple[list, list, list]] = []
        self.outgoing: list[list] = []
        self.step_ids = step_ids
        self.active = self.initial
        self.p1_pending = True

    def reset(self) -> None:
        self.active = self.initial
        self.p1_pending = True


class Machine:
    """A compiled project bound to its own variable storage."""

    def __init__(self, project: SourceProject, config: ScanConfig | None = None):
        self.project = project
        self.config = config or ScanConfig.for_project(project)
        self.sym = Symbols(project)
        self.names = detect_trace_names(project)
        self.runtime_pous = set()
        if self.names is not None:
            self.runtime_pous = {self.names.record.lower(), self.names.reset.lower(), self.names.save.lower()}
        self.slots: dict[str, _Slot] = {}
        self.M: list = []
        self.state: PlcState | None = None
        self.charts: list[_Chart] = []
        self.inputs: dict[str, _Slot] = {}
        self.outputs: dict[str, _Slot] = {}
        self.entries: dict[str, object] = {}
        self.save_edge = False
        self._layout()
        self.bodies: dict[str, object] = {}
        self.action_fns: dict[tuple[str, str], object] = {}
        for pou in project.pous:
            if pou.name.lower() not in self.runtime_pous:
                self._compile_pou(pou)

    # storage ------------------------------------------------------------

    def _add_slot(self, key: str, decl: VarDecl) -> _Slot:
        slot = _Slot(len(self.M), decl)
        self.slots[key] = slot
        self.M.append(default_value(decl))
        return slot

    def _layout(self) -> None:
        for v in self.project.global_vars:
            if v.dims is not None:
                continue
            slot = self._add_slot(v.name.lower(), v)
            if v.storage is Storage.INPUT:
                self.inputs[v.name] = slot
            elif v.storage is Storage.OUTPUT:
                self.outputs[v.name] = slot
        for p in self.project.pous:
            if p.name.lower() in self.runtime_pous:
                continue
            for v in p.vars:
                slot = self._add_slot(f"{p.name.lower()}.{v.name.lower()}", v)
                if p.kind is PouKind.PROGRAM and v.storage is Storage.INPUT:
                    self.inputs[f"{p.name}.{v.name}"] = slot
                elif p.kind is PouKind.PROGRAM and v.storage is Storage.OUTPUT:
                    self.outputs[f"{p.name}.{v.name}"] = slot
            if p.kind is PouKind.FUNCTION:
                self._add_slot(f"{p.name.lower()}.$result", VarDecl(p.name, p.return_type, Storage.LOCAL))

    def reset(self) -> None:
        for slot in self.slots.values():
            self.M[slot.index] = default_value(slot.decl)
        for c in self.charts:
            c.reset()
        self.save_edge = False

    def snapshot(self) -> dict[str, object]:
        return {k: self.M[s.index] for k, s in self.slots.items()}

    def slot_of(self, pou: PouDecl, name: str) -> _Slot:
        kind, decl = self.sym.var(pou, name)
        if kind == "global":
            return self.slots[decl.name.lower()]
        if kind == "result":
            return self.slots[f"{pou.name.lower()}.$result"]
        return self.slots[f"{pou.name.lower()}.{decl.name.lower()}"]

    # expressions --------------------------------------------------------

    def expr(self, pou: PouDecl, e: Expr, loc: SourceLoc):
        M = self.M
        if isinstance(e, Literal):
            v = e.value
            return lambda: v
        if isinstance(e, Name):
            i = self.slot_of(pou, e.ident).index
            return lambda: M[i]
        if isinstance(e, Index):
            idx = self.expr(pou, e.index, loc)
            return lambda: self.tpa_get(idx(), loc)
        if isinstance(e, Unary):
            f = self.expr(pou, e.operand, loc)
            if e.op == "-":
                return lambda: -f()

            def not_(f=f):
                v = f()
                return (not v) if isinstance(v, bool) else ~v

            return not_
        if isinstance(e, Binary):
            return self.binary(pou, e, loc)
        if isinstance(e, CallExpr):
            return self.call_expr(pou, e, loc)
        raise TypeError(e)

    def binary(self, pou: PouDecl, e: Binary, loc: SourceLoc):
        a, b = self.expr(pou, e.left, loc), self.expr(pou, e.right, loc)
        op = e.op
        if op == "AND":
            return lambda: a() & b()
        if op == "OR":
            return lambda: a() | b()
        if op == "XOR":
            return lambda: a() ^ b()
        if op == "+":
            return lambda: a() + b()
        if op == "-":
            return lambda: a() - b()
        if op == "*":
            return lambda: a() * b()
        if op == "=":
            return lambda: a() == b()
        if op == "<>":
            return lambda: a() != b()
        if op == "<":
            return lambda: a() < b()
        if op == ">":
            return lambda: a() > b()
        if op == "<=":
            return lambda: a() <= b()
        if op == ">=":
            return lambda: a() >= b()
        if op == "/":

            def div():
                x, y = a(), b()
                if y == 0:
                    raise RuntimeFault("division by zero", loc)
                if isinstance(x, float) or isinstance(y, float):
                    return x / y
                q = abs(x) // abs(y)
                return q if (x >= 0) == (y >= 0) else -q

            return div
        if op == "MOD":

            def mod():
                x, y = a(), b()
                if y == 0:
                    raise RuntimeFault("MOD by zero", loc)
                if isinstance(x, float) or isinstance(y, float):
                    return math.fmod(x, y)
                r = abs(x) % abs(y)
                return r if x >= 0 else -r

            return mod
        raise TypeError(op)

    def call_expr(self, pou: PouDecl, e: CallExpr, loc: SourceLoc):
        kind, obj = self.sym.call(pou, e.target)
        if kind == "builtin":
            args = [self.expr(pou, a.value, loc) for a in e.args]
            return self.builtin(obj, args)
        return self.pou_call(pou, obj, e.args, loc)

    def builtin(self, name: str, args):
        if name == "abs":
            (x,) = args
            return lambda: abs(x())
        if name == "min":
            x, y = args
            return lambda: min(x(), y())
        if name == "max":
            x, y = args
            return lambda: max(x(), y())
        if name == "limit":
            lo, x, hi = args
            return lambda: min(max(x(), lo()), hi())
        if name == "sel":
            g, x, y = args
            return lambda: y() if g() else x()
        if name == "time":
            return lambda: self.state.time_ms
        raise TypeError(name)

    # calls ----------------------------------------------------------------

    def pou_call(self, caller: PouDecl, callee: PouDecl, args, loc: SourceLoc):
        """Closure performing a call of ``callee``; returns the function result (or None)."""
        key = callee.name.lower()
        if key in self.runtime_pous:
            return self.native_call(caller, callee, args, loc)
        M = self.M
        inputs = callee.inputs
        binds = []
        outs = []
        for k, a in enumerate(args):
            if a.output:
                src = self.slots[f"{key}.{a.name.lower()}"].index
                dst = self.slot_of(caller, a.value.ident)
                outs.append((src, dst.index, COERCE[dst.decl.data_type]))
                continue
            param = inputs[k] if a.name is None else callee.var(a.name)
            slot = self.slots[f"{key}.{param.name.lower()}"]
            binds.append((slot.index, COERCE[param.data_type], self.expr(caller, a.value, loc)))
        is_fn = callee.kind is PouKind.FUNCTION
        frame = [(s.index, s.decl) for k2, s in self.slots.items() if k2.startswith(key + ".")] if is_fn else []
        result = self.slots[f"{key}.$result"].index if is_fn else None
        bodies = self.bodies

        def call():
            vals = [(i, c(f())) for i, c, f in binds]
            for i, d in frame:
                M[i] = default_value(d)
            for i, v in vals:
                M[i] = v
            bodies[key]()
            for src, dst, c in outs:
                M[dst] = c(M[src])
            return M[result] if result is not None else None

        return call

    def native_call(self, caller: PouDecl, callee: PouDecl, args, loc: SourceLoc):
        names = self.names
        key = callee.name.lower()
        vals = {(a.name or "i").lower(): a for a in args}
        if key == names.record.lower():
            idx = self.expr(caller, vals["i"].value, loc)

            def record():
                self.tpa_set(idx(), loc)
                return True

            return record
        if key == names.reset.lower():

            def reset():
                if self.state.pending_save is not None:
                    return False
                tp_reset_op(self.state)
                return True

            return reset
        execute = self.expr(caller, vals["xexecute"].value, loc) if "xexecute" in vals else (lambda: False)
        fname = self.expr(caller, vals["szfilename"].value, loc) if "szfilename" in vals else (lambda: "")
        done_dst = self.slot_of(caller, vals["xdone"].value.ident).index if "xdone" in vals else None
        M = self.M

        def save():
            st = self.state
            ex = bool(execute())
            if ex and not self.save_edge and st.pending_save is None:
                tp_save_op(st, fname())
            self.save_edge = ex
            if done_dst is not None:
                M[done_dst] = st.pending_save is None and st.last_save is not None and st.last_save.done
            return None

        return save

    def tpa_get(self, i, loc):
        tpa = self.state.tpa
        if not 0 <= i < len(tpa):
            raise RuntimeFault(f"trace index {i} out of range", loc)
        return tpa[i]

    def tpa_set(self, i, loc):
        tpa = self.state.tpa
        if not 0 <= i < len(tpa):
            raise RuntimeFault(f"trace index {i} out of range", loc)
        tpa[i] = True

    # statements ------------------------------------------------------------

    def is_runtime_call(self, s: Stmt) -> bool:
        return isinstance(s, CallStmt) and s.target.lower() in self.runtime_pous

    def block(self, pou: PouDecl, stmts):
        items = [(None if self.is_runtime_call(s) else s.loc, self.stmt(pou, s)) for s in stmts]
        log = self.log

        if self.config.statement_log:

            def run():
                for loc, f in items:
                    if loc is not None:
                        log(loc)
                    r = f()
                    if r is not None:
                        return r
                return None

        else:
            fns = [f for _, f in items]

            def run():
                for f in fns:
                    r = f()
                    if r is not None:
                        return r
                return None

        return run

    def log(self, loc) -> None:
        self.state.stmt_log.add(loc)

    def stmt(self, pou: PouDecl, s: Stmt):
        M = self.M
        loc = s.loc
        if isinstance(s, Assign):
            val = self.expr(pou, s.value, loc)
            if s.index is not None:
                idx = self.expr(pou, s.index, loc)

                def assign_index():
                    i, v = idx(), val()
                    if v:
                        self.tpa_set(i, loc)
                    else:
                        self.tpa_get(i, loc)
                        self.state.tpa[i] = False

                return assign_index
            slot = self.slot_of(pou, s.target)
            i, c = slot.index, COERCE[slot.decl.data_type]

            def assign():
                M[i] = c(val())

            return assign
        if isinstance(s, If):
            branches = [(self.expr(pou, c, loc), self.block(pou, b)) for c, b in s.branches]
            els = self.block(pou, s.else_body) if s.else_body is not None else None

            def if_():
                for cond, body in branches:
                    if cond():
                        return body()
                if els is not None:
                    return els()
                return None

            return if_
        if isinstance(s, Case):
            sel = self.expr(pou, s.selector, loc)
            arms = [(a.labels, self.block(pou, a.body)) for a in s.arms]
            els = self.block(pou, s.else_body) if s.else_body is not None else None

            def case():
                v = sel()
                for labels, body in arms:
                    for lo, hi in labels:
                        if lo <= v <= hi:
                            return body()
                if els is not None:
                    return els()
                return None

            return case
        if isinstance(s, For):
            return self.for_loop(pou, s)
        if isinstance(s, While):
            cond, body = self.expr(pou, s.cond, loc), self.block(pou, s.body)
            limit = self.config.loop_limit

            def while_():
                n = 0
                while cond():
                    n += 1
                    if n > limit:
                        raise RuntimeFault("loop iteration limit exceeded", loc)
                    r = body()
                    if r == EXIT:
                        break
                    if r == RETURN:
                        return r
                return None

            return while_
        if isinstance(s, Repeat):
            cond, body = self.expr(pou, s.until, loc), self.block(pou, s.body)
            limit = self.config.loop_limit

            def repeat():
                n = 0
                while True:
                    n += 1
                    if n > limit:
                        raise RuntimeFault("loop iteration limit exceeded", loc)
                    r = body()
                    if r == EXIT:
                        break
                    if r == RETURN:
                        return r
                    if cond():
                        break
                return None

            return repeat
        if isinstance(s, CallStmt):
            kind, obj = self.sym.call(pou, s.target)
            if kind == "action":
                fns = self.action_fns
                akey = (pou.name.lower(), obj.name.lower())

                def call_action():
                    fns[akey]()

                return call_action
            f = self.pou_call(pou, obj, s.args, loc)

            def call_stmt():
                f()

            return call_stmt
        if isinstance(s, Return):
            return lambda: RETURN
        if isinstance(s, Exit):
            return lambda: EXIT
        raise TypeError(s)

    def for_loop(self, pou: PouDecl, s: For):
        M = self.M
        loc = s.loc
        slot = self.slot_of(pou, s.var)
        i, c = slot.index, COERCE[slot.decl.data_type]
        start, stop = self.expr(pou, s.start, loc), self.expr(pou, s.stop, loc)
        step = self.expr(pou, s.step, loc) if s.step is not None else (lambda: 1)
        body = self.block(pou, s.body)
        limit = self.config.loop_limit

        def for_():
            M[i] = c(start())
            hi, by = stop(), step()
            if by == 0:
                raise RuntimeFault("FOR step is zero", loc)
            n = 0
            while (M[i] <= hi) if by > 0 else (M[i] >= hi):
                n += 1
                if n > limit:
                    raise RuntimeFault("loop iteration limit exceeded", loc)
                r = body()
                if r == EXIT:
                    break
                if r == RETURN:
                    return r
                M[i] = c(M[i] + by)
            return None

        return for_

    # POUs -------------------------------------------------------------------

    def _compile_pou(self, pou: PouDecl) -> None:
        key = pou.name.lower()
        for act in pou.actions:
            body = self.block(pou, act.body)
            self.action_fns[(key, act.name.lower())] = lambda body=body: body() and None
        if isinstance(pou.body, SfcBody):
            self.bodies[key] = self._compile_chart(pou)
        else:
            body = self.block(pou, pou.body.stmts)
            self.bodies[key] = lambda: body() and None

    def _compile_chart(self, pou: PouDecl):
        cs = pou.body.chart
        key = pou.name.lower()
        index = {s.name.lower(): k for k, s in enumerate(cs.steps)}
        chart = _Chart(pou.name, cs.steps, cs.transitions, [f"step:{pou.name}.{s.name}" for s in cs.steps])
        for s in cs.steps:
            groups = {"P1": [], "N": [], "P0": []}
            for ref in s.actions:
                groups[ref.qualifier].append((key, pou.action(ref.action).name.lower()))
            chart.actions.append((groups["P1"], groups["N"], groups["P0"]))
            chart.outgoing.append([])
        for t in cs.transitions:
            chart.outgoing[index[t.source.lower()]].append((self.expr(pou, t.cond, t.loc), index[t.target.lower()]))
        self.charts.append(chart)
        fns = self.action_fns

        def evolve():
            k = chart.active
            p1, n, p0 = chart.actions[k]
            if chart.p1_pending:
                chart.p1_pending = False
                self.state.step_log.add(chart.step_ids[k])
                for a in p1:
                    fns[a]()
            for a in n:
                fns[a]()
            for cond, target in chart.outgoing[k]:
                if cond():
                    for a in p0:
                        fns[a]()
                    chart.active = target
                    chart.p1_pending = True
                    break

        return evolve

    def run_task(self, task: TaskDecl) -> None:
        self.bodies[task.entry.lower()]()


# -- operations ----------------------------------------------------------------


def init_state(project: SourceProject, config: ScanConfig | None = None, machine: Machine | None = None) -> PlcState:
    """Fresh state: declared initial values, initial SFC steps armed, trace array cleared.

    Passing the ``machine`` of an earlier state reuses its compiled code; that
    earlier state must not be used afterwards.
    """
    if machine is None:
        machine = Machine(project, config)
    else:
        machine.reset()
    config = machine.config
    names = machine.names
    state = PlcState(machine, config)
    state.tpa = [False] * (names.max_tp + 1 if names is not None else 0)
    state.task_phase = {t.name: 0 for t in config.tasks}
    state.input_image = {k: machine.M[s.index] for k, s in machine.inputs.items()}
    state.output_image = {k: machine.M[s.index] for k, s in machine.outputs.items()}
    machine.state = state
    return state


def io_variables(project: SourceProject) -> tuple[dict[str, VarDecl], dict[str, VarDecl]]:
    """Process inputs and outputs by name: global I/O plus ``Program.var`` parameters."""
    names = detect_trace_names(project)
    skip = {names.record.lower(), names.reset.lower(), names.save.lower()} if names else set()
    inputs: dict[str, VarDecl] = {}
    outputs: dict[str, VarDecl] = {}
    for v in project.global_vars:
        if v.storage is Storage.INPUT:
            inputs[v.name] = v
        elif v.storage is Storage.OUTPUT:
            outputs[v.name] = v
    for p in project.pous:
        if p.kind is PouKind.PROGRAM and p.name.lower() not in skip:
            for v in p.vars:
                if v.storage is Storage.INPUT:
                    inputs[f"{p.name}.{v.name}"] = v
                elif v.storage is Storage.OUTPUT:
                    outputs[f"{p.name}.{v.name}"] = v
    return inputs, outputs


def _lookup(table: dict, name: str):
    if name in table:
        return name, table[name]
    low = name.lower()
    for k, v in table.items():
        if k.lower() == low:
            return k, v
    return None, None


def set_inputs(state: PlcState, inputs) -> None:
    m = state.machine
    for name, value in inputs.items():
        key, slot = _lookup(m.inputs, name)
        if slot is None:
            raise KeyError(f"{name!r} is not a process input")
        if isinstance(value, str):
            value = parse_value(value, slot.decl.data_type)
        state.input_image[key] = COERCE[slot.decl.data_type](value)


def run_cycle(state: PlcState, inputs=None) -> tuple[PlcState, dict[str, object]]:
    """Run one base tick; returns the state (mutated in place) and the output image."""
    m, cfg = state.machine, state.config
    if cfg.max_cycles is not None and state.cycle_counter >= cfg.max_cycles:
        raise RuntimeFault(f"cycle limit {cfg.max_cycles} reached")
    if inputs:
        set_inputs(state, inputs)
    for key, slot in m.inputs.items():
        m.M[slot.index] = state.input_image[key]
    due = [t for t in cfg.tasks if state.task_phase[t.name] <= state.time_ms]
    for t in sorted(due, key=lambda t: t.priority):
        m.run_task(t)
        state.task_phase[t.name] += t.cycle_time
    state.output_image = {k: m.M[s.index] for k, s in m.outputs.items()}
    advance_save(state)
    state.cycle_counter += 1
    state.time_ms += cfg.base_tick
    return state, dict(state.output_image)


def tpr_op(state: PlcState, i: int) -> PlcState:
    if not 0 <= i < len(state.tpa):
        raise RuntimeFault(f"trace index {i} out of range")
    state.tpa[i] = True
    return state


def tp_reset_op(state: PlcState) -> PlcState:
    if state.pending_save is not None:
        raise SaveInProgress("tp_reset rejected while a save is pending")
    state.tpa[:] = [False] * len(state.tpa)
    return state


def tp_save_op(state: PlcState, filename: str) -> PlcState:
    """Start an asynchronous save of a snapshot of the trace array."""
    if state.pending_save is not None:
        raise SaveInProgress("another save is still pending")
    state.pending_save = SaveOp(filename, tuple(state.tpa), save_cycles(len(state.tpa)))
    return state


def advance_save(state: PlcState) -> None:
    """Advance a pending save by one cycle; writes the file when it completes."""
    op = state.pending_save
    if op is None:
        return
    op.progress += 1
    if op.progress >= op.cycles_needed:
        text = op.text()
        state.saved_files[op.filename] = text
        if state.config.save_dir is not None:
            path = Path(state.config.save_dir) / op.filename
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text, encoding="utf-8")
        op.done = True
        state.pending_save = None
        state.last_save = op


def idle_cycle(state: PlcState) -> None:
    """A cycle in which no task runs (e.g. after a fault); only the save advances."""
    advance_save(state)
    state.cycle_counter += 1
    state.time_ms += state.config.base_tick


def visited_from_log(state: PlcState, db) -> set[int]:
    """Trace-point ids whose first statement (or step activation) appears in the debug logs."""
    out = set()
    for p in db.points:
        if p.kind == "step":
            if p.block_ref in state.step_log:
                out.add(p.id)
        elif p.source_start_pos in state.stmt_log:
            out.add(p.id)
    return out
