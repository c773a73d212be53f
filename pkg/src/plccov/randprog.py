"""Seeded generator of random, well-formed, terminating projects.

Programs exercise every statement form, SFC charts, actions, function blocks
and functions.  Loops are bounded by dedicated counters that no other statement
writes, divisors are nonzero literals and calls form a DAG, so every generated
project runs forever without faults.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .frontend.ast import (
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
    For,
    If,
    Literal,
    Name,
    PouDecl,
    PouKind,
    Repeat,
    Return,
    SfcBody,
    SfcChart,
    SourceProject,
    StBody,
    Step,
    StepAction,
    Storage,
    TaskDecl,
    Transition,
    Unary,
    VarDecl,
    While,
)
from .frontend.printer import Printer

INT, BOOL, DINT, REAL = DataType.INT, DataType.BOOL, DataType.DINT, DataType.REAL


@dataclass(frozen=True)
class GenConfig:
    n_pous: int = 6
    max_stmts: int = 4
    max_depth: int = 3
    n_inputs: int = 4
    n_outputs: int = 4
    sfc_probability: float = 0.3
    uncalled_probability: float = 0.3
    two_tasks_probability: float = 0.5


class _Gen:
    def __init__(self, seed: int, cfg: GenConfig):
        self.rng = random.Random(seed)
        self.cfg = cfg
        self.globals: list[VarDecl] = []
        self.pous: list[PouDecl] = []

    # variables ------------------------------------------------------------

    def readable(self, unit, t: DataType) -> list[str]:
        out = [v.name for v in self.globals if v.data_type is t and v.dims is None]
        out += [v.name for v in unit["vars"] if v.data_type is t]
        return out

    def writable(self, unit, t: DataType) -> list[str]:
        out = [v.name for v in self.globals if v.data_type is t and v.storage is not Storage.INPUT]
        out += [v.name for v in unit["vars"] if v.data_type is t and not v.name.startswith(("c_", "f_"))]
        if unit["kind"] is PouKind.PROGRAM:
            out = [n for n in out if n not in {v.name for v in unit["vars"] if v.storage is Storage.INPUT}]
        return out

    # expressions -----------------------------------------------------------

    def int_expr(self, unit, depth: int = 0):
        r = self.rng.random()
        names = self.readable(unit, INT) + self.readable(unit, DINT)
        if depth >= 2 or r < 0.3:
            if names and self.rng.random() < 0.7:
                return Name(self.rng.choice(names))
            return Literal(self.rng.randint(-20, 20), INT)
        if r < 0.75:
            op = self.rng.choice(["+", "-", "*", "+", "-"])
            return Binary(op, self.int_expr(unit, depth + 1), self.int_expr(unit, depth + 1))
        if r < 0.85:
            op = self.rng.choice(["/", "MOD"])
            return Binary(op, self.int_expr(unit, depth + 1), Literal(self.rng.choice([2, 3, 5, 7]), INT))
        if r < 0.9:
            return Unary("-", self.int_expr(unit, depth + 1))
        funcs = [p for p in unit["callable"] if p.kind is PouKind.FUNCTION]
        if funcs and self.rng.random() < 0.6:
            f = self.rng.choice(funcs)
            return CallExpr(f.name, tuple(Arg(None, self.int_expr(unit, depth + 1)) for _ in f.inputs))
        name = self.rng.choice(["ABS", "MIN", "MAX", "LIMIT", "SEL"])
        arity = {"ABS": 1, "MIN": 2, "MAX": 2, "LIMIT": 3, "SEL": 3}[name]
        args = [self.int_expr(unit, depth + 1) for _ in range(arity)]
        if name == "SEL":
            args[0] = self.bool_expr(unit, depth + 1)
        return CallExpr(name, tuple(Arg(None, a) for a in args))

    def bool_expr(self, unit, depth: int = 0):
        r = self.rng.random()
        names = self.readable(unit, BOOL)
        if depth >= 2 or r < 0.3:
            if names and self.rng.random() < 0.8:
                return Name(self.rng.choice(names))
            return Literal(self.rng.random() < 0.5, BOOL)
        if r < 0.65:
            op = self.rng.choice(["<", ">", "<=", ">=", "=", "<>"])
            return Binary(op, self.int_expr(unit, depth + 1), self.int_expr(unit, depth + 1))
        if r < 0.9:
            op = self.rng.choice(["AND", "OR", "XOR"])
            return Binary(op, self.bool_expr(unit, depth + 1), self.bool_expr(unit, depth + 1))
        return Unary("NOT", self.bool_expr(unit, depth + 1))

    # statements ------------------------------------------------------------

    def stmts(self, unit, depth: int, loop: int, lo: int = 1):
        return tuple(self.stmt(unit, depth, loop) for _ in range(self.rng.randint(lo, self.cfg.max_stmts)))

    def counter(self, unit, prefix: str, depth: int) -> str:
        name = f"{prefix}_{unit['tag']}_{depth}"
        if all(v.name != name for v in unit["vars"]):
            unit["vars"].append(VarDecl(name, INT, Storage.LOCAL))
        return name

    def assign(self, unit):
        for _ in range(3):
            t = self.rng.choice([INT, INT, BOOL, DINT, REAL])
            targets = self.writable(unit, t)
            if targets:
                break
        else:
            return Assign(self.counter(unit, "c", 99), Literal(0, INT))
        target = self.rng.choice(targets)
        if t is BOOL:
            return Assign(target, self.bool_expr(unit))
        if t is REAL:
            return Assign(target, Binary("/", self.int_expr(unit), Literal(2.0, REAL)))
        return Assign(target, self.int_expr(unit))

    def stmt(self, unit, depth: int, loop: int):
        r = self.rng.random()
        if depth >= self.cfg.max_depth or r < 0.45:
            return self.simple(unit, loop)
        if r < 0.65:
            branches = tuple((self.bool_expr(unit), self.stmts(unit, depth + 1, loop, 0)) for _ in range(self.rng.randint(1, 3)))
            els = self.stmts(unit, depth + 1, loop, 0) if self.rng.random() < 0.5 else None
            return If(branches, els)
        if r < 0.75:
            labels, arms = 0, []
            for _ in range(self.rng.randint(0, 3)):
                lo = labels + self.rng.randint(0, 1)
                hi = lo + self.rng.randint(0, 1)
                labels = hi + 1
                arms.append(CaseArm(((lo, hi),), self.stmts(unit, depth + 1, loop, 0)))
            els = self.stmts(unit, depth + 1, loop, 0) if self.rng.random() < 0.5 or not arms else None
            sel = Binary("MOD", self.int_expr(unit), Literal(6, INT))
            return Case(sel, tuple(arms), els)
        if r < 0.85:
            var = self.counter(unit, "f", depth)
            stop = self.rng.choice([Literal(self.rng.randint(-1, 3), INT), Binary("MOD", self.int_expr(unit), Literal(4, INT))])
            step = Literal(self.rng.choice([1, 2]), INT) if self.rng.random() < 0.3 else None
            return For(var, Literal(0, INT), stop, step, self.stmts(unit, depth + 1, loop + 1))
        c = self.counter(unit, "c", depth)
        bound = Binary("<", Name(c), Literal(self.rng.randint(1, 3), INT))
        bump = Assign(c, Binary("+", Name(c), Literal(1, INT)))
        body = self.stmts(unit, depth + 1, loop + 1) + (bump,)
        init = Assign(c, Literal(0, INT))
        if self.rng.random() < 0.5:
            cond = Binary("AND", bound, self.bool_expr(unit)) if self.rng.random() < 0.5 else bound
            loop_stmt = While(cond, body)
        else:
            loop_stmt = Repeat(body, Unary("NOT", bound))
        # the initialisation is emitted as its own statement before the loop
        return If(((Literal(True, BOOL), (init, loop_stmt)),), None)

    def simple(self, unit, loop: int):
        r = self.rng.random()
        if r < 0.12 and loop and self.rng.random() < 0.5:
            return If(((self.bool_expr(unit), (Exit(),)),), None)
        if r < 0.16:
            return If(((self.bool_expr(unit), (Return(),)),), None)
        if r < 0.32:
            fbs = [p for p in unit["callable"] if p.kind is PouKind.FUNCTION_BLOCK]
            acts = unit["actions"]
            if acts and self.rng.random() < 0.4:
                return CallStmt(self.rng.choice(acts))
            if fbs:
                fb = self.rng.choice(fbs)
                args = [Arg(v.name, self.int_expr(unit) if v.data_type is not BOOL else self.bool_expr(unit))
                        for v in fb.inputs if self.rng.random() < 0.8]  # fmt: skip
                for v in fb.vars:
                    if v.storage is Storage.OUTPUT and self.rng.random() < 0.6:
                        dsts = self.writable(unit, v.data_type)
                        if dsts:
                            args.append(Arg(v.name, Name(self.rng.choice(dsts)), output=True))
                return CallStmt(fb.name, tuple(args))
        return self.assign(unit)

    # POUs ------------------------------------------------------------------

    def pou(self, index: int, kind: PouKind, sfc: bool) -> PouDecl:
        name = f"{ {PouKind.PROGRAM: 'Prg', PouKind.FUNCTION_BLOCK: 'Fb', PouKind.FUNCTION: 'Fn'}[kind] }{index}"
        unit = {"tag": name.lower(), "kind": kind, "vars": [], "actions": [],
                "callable": [p for p in self.pous if p.kind is not PouKind.PROGRAM]}  # fmt: skip
        if kind is PouKind.FUNCTION:
            unit["callable"] = [p for p in unit["callable"] if p.kind is PouKind.FUNCTION]
            unit["vars"] += [VarDecl("a", INT, Storage.INPUT), VarDecl("b", INT, Storage.INPUT)]
            unit["vars"].append(VarDecl("t", INT, Storage.LOCAL))
            body = self.stmts(unit, 0, 0) + (Assign(name, self.int_expr(unit)),)
            return PouDecl(name, kind, tuple(unit["vars"]), StBody(body), (), INT)
        if kind is PouKind.FUNCTION_BLOCK:
            unit["vars"] += [VarDecl("x", INT, Storage.INPUT), VarDecl("en", BOOL, Storage.INPUT)]
            unit["vars"] += [VarDecl("y", INT, Storage.OUTPUT), VarDecl("q", BOOL, Storage.OUTPUT)]
        unit["vars"] += [VarDecl("s", INT, Storage.LOCAL, Literal(self.rng.randint(0, 3), INT)), VarDecl("flag", BOOL, Storage.LOCAL)]
        actions = []
        for k in range(self.rng.randint(0, 2) + (3 if sfc else 0)):
            aname = f"act{k}"
            unit["tag"] = f"{name.lower()}_{aname}"  # loop counters are private to each code unit
            actions.append(ActionDecl(aname, self.stmts(unit, 1, 0)))
            if not sfc:
                unit["actions"].append(aname)
        unit["tag"] = name.lower()
        if sfc:
            n = self.rng.randint(2, 4)
            names = [f"S{k}" for k in range(n)]
            steps = []
            for k, s in enumerate(names):
                refs = tuple(
                    StepAction(a.name, self.rng.choice(["N", "N", "P1", "P0"]))
                    for a in actions if self.rng.random() < 0.4
                )  # fmt: skip
                steps.append(Step(s, k == 0, refs))
            trans = []
            for k, s in enumerate(names):
                for _ in range(self.rng.randint(0, 2)):
                    trans.append(Transition(s, self.rng.choice(names), self.bool_expr(unit)))
            body = SfcBody(SfcChart(tuple(steps), tuple(trans)))
        else:
            body = StBody(self.stmts(unit, 0, 0))
        return PouDecl(name, kind, tuple(unit["vars"]), body, tuple(actions))

    def project(self) -> tuple[list[VarDecl], list[PouDecl], list[TaskDecl]]:
        rng, cfg = self.rng, self.cfg
        for k in range(cfg.n_inputs):
            t = rng.choice([BOOL, BOOL, INT, INT, DINT])
            self.globals.append(VarDecl(f"i{k}", t, Storage.INPUT))
        for k in range(cfg.n_outputs):
            t = rng.choice([BOOL, INT, INT, REAL])
            self.globals.append(VarDecl(f"o{k}", t, Storage.OUTPUT))
        self.globals += [VarDecl("g0", INT, Storage.GLOBAL), VarDecl("g1", BOOL, Storage.GLOBAL)]
        kinds = [rng.choice([PouKind.FUNCTION, PouKind.FUNCTION_BLOCK, PouKind.FUNCTION_BLOCK]) for _ in range(cfg.n_pous - 1)]
        kinds.append(PouKind.PROGRAM)
        if rng.random() < cfg.two_tasks_probability:
            kinds.append(PouKind.PROGRAM)
        for k, kind in enumerate(kinds):
            sfc = kind is not PouKind.FUNCTION and rng.random() < cfg.sfc_probability
            self.pous.append(self.pou(k, kind, sfc))
        programs = [p for p in self.pous if p.kind is PouKind.PROGRAM]
        if len(programs) > 1 and rng.random() < cfg.uncalled_probability:
            programs = programs[:1]  # leave the second program without a task
        tasks = [TaskDecl(f"T{k}", rng.choice([10, 20, 50]) * (k + 1), k + 1, p.name) for k, p in enumerate(programs)]
        return self.globals, self.pous, tasks


def generate_source(seed: int, cfg: GenConfig = GenConfig()) -> str:
    """Source text of a random project; tasks are declared in the text."""
    globals_, pous, tasks = _Gen(seed, cfg).project()
    pr = Printer()
    pr.globals_block(globals_)
    for p in pous:
        pr.emit(0, "")
        pr.pou(p)
    for t in tasks:
        pr.emit(0, "")
        pr.task(t)
    return "\n".join(pr.lines) + "\n"


def generate_project(seed: int, cfg: GenConfig = GenConfig()) -> SourceProject:
    from .frontend import parse_project

    return parse_project([(f"rand{seed}.st", generate_source(seed, cfg))])


def random_inputs(project: SourceProject, rng: random.Random) -> dict[str, object]:
    """One random value for every process input of ``project``."""
    out: dict[str, object] = {}
    for v in project.global_vars:
        if v.storage is Storage.INPUT:
            out[v.name] = _random_value(v.data_type, rng)
    for p in project.pous:
        if p.kind is PouKind.PROGRAM:
            for v in p.vars:
                if v.storage is Storage.INPUT:
                    out[f"{p.name}.{v.name}"] = _random_value(v.data_type, rng)
    return out


def _random_value(t: DataType, rng: random.Random):
    if t is BOOL:
        return rng.random() < 0.5
    if t is REAL:
        return rng.uniform(-100, 100)
    if t is DataType.TIME:
        return rng.randint(0, 10_000)
    if t is DataType.STRING:
        return rng.choice(["", "a", "ok"])
    return rng.randint(-30, 30)
