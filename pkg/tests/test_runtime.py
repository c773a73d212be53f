from __future__ import annotations

import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plccov.depmodel import build_model
from plccov.frontend import parse_project
from plccov.instrument import instrument
from plccov.randprog import generate_project, random_inputs
from plccov.runtime import (
    MAX_SAVE_CYCLES,
    RuntimeFault,
    SaveInProgress,
    ScanConfig,
    format_trace,
    idle_cycle,
    init_state,
    parse_value,
    run_cycle,
    save_cycles,
    tp_reset_op,
    tp_save_op,
    tpr_op,
    visited_from_log,
)
from plccov.frontend.ast import DataType

from conftest import project_from


def one_program(body: str, decls: str = "", extra: str = "") -> str:
    return f"{extra}\nPROGRAM P\n{decls}\n{body}\nEND_PROGRAM\nTASK T (INTERVAL := T#10ms, PRIORITY := 1) : P;\n"


def run_vars(body: str, decls: str, cycles: int = 1, extra: str = ""):
    state = init_state(project_from(one_program(body, decls, extra)))
    for _ in range(cycles):
        run_cycle(state)
    return state.vars


@pytest.fixture(scope="module")
def signfb_instrumented(signfb_project, signfb_model):
    ip, db = instrument(signfb_project, signfb_model)
    return ip, db


class TestInit:
    def test_defaults_and_inits(self):
        decls = "VAR b : BOOL; i : INT; r : REAL; t : TIME; s : STRING; k : INT := 7; END_VAR"
        v = init_state(project_from(one_program("", decls))).vars
        assert (v["p.b"], v["p.i"], v["p.r"], v["p.t"], v["p.s"], v["p.k"]) == (False, 0, 0.0, 0, "", 7)

    def test_initial_step_active(self, demo_project):
        state = init_state(demo_project)
        assert state.sfc_state["LiftSeq"] == ("Lowered", True)
        assert state.sfc_state["PpuSeq"] == ("Home", True)

    def test_tpa_cleared(self, signfb_instrumented):
        ip, db = signfb_instrumented
        state = init_state(ip.base)
        assert state.tpa == [False] * (db.max_tp + 1)

    def test_config_from_tasks(self, demo_project):
        cfg = ScanConfig.for_project(demo_project)
        assert cfg.base_tick == 10

    def test_bad_base_tick(self, demo_project):
        with pytest.raises(ValueError):
            ScanConfig(demo_project.tasks, 30)


class TestSignFbCycle:
    @pytest.mark.parametrize(
        "sensor, out, neg, visited",
        [(-1, -1, True, {42, 43}), (0, 0, False, {42, 44}), (9, 1, False, {42, 45})],
    )
    def test_branch(self, signfb_instrumented, sensor, out, neg, visited):
        ip, _ = signfb_instrumented
        state = init_state(ip.base)
        _, outputs = run_cycle(state, {"sensor": sensor})
        assert outputs == {"actuator": out, "is_negative": neg}
        assert {i for i in range(42, 46) if state.tpa[i]} == visited
        # mode = 0 matches no CASE arm
        assert state.tpa[0] and state.tpa[41] and not any(state.tpa[1:41])

    def test_original_matches(self, signfb_project):
        state = init_state(signfb_project)
        assert run_cycle(state, {"sensor": -5})[1] == {"actuator": -1, "is_negative": True}


class TestSchedule:
    SRC = """
VAR_GLOBAL
    a AT %Q* : INT;
    b AT %Q* : INT;
    order : INT;
    first AT %Q* : INT;
END_VAR
PROGRAM Fast
a := a + 1;
order := order * 10 + 1;
END_PROGRAM
PROGRAM Slow
b := b + 1;
order := order * 10 + 2;
first := order;
END_PROGRAM
TASK Visu (INTERVAL := T#100ms, PRIORITY := 2) : Slow;
TASK Control (INTERVAL := T#10ms, PRIORITY := 1) : Fast;
"""

    def test_ten_to_one(self):
        state = init_state(project_from(self.SRC))
        assert state.config.base_tick == 10
        for _ in range(10):
            _, out = run_cycle(state)
        assert (out["a"], out["b"]) == (10, 1)
        assert state.time_ms == 100

    def test_priority_order_on_shared_tick(self):
        state = init_state(project_from(self.SRC))
        _, out = run_cycle(state)
        assert out["first"] == 12  # Control (priority 1) ran before Visu

    def test_time_function(self):
        v = run_vars("t := TIME();", "VAR t : TIME; END_VAR", cycles=4)
        assert v["p.t"] == 30


class TestArithmetic:
    @pytest.mark.parametrize(
        "expr, expected",
        [
            ("7 / 2", 3),
            ("-7 / 2", -3),
            ("7 MOD 3", 1),
            ("-7 MOD 3", -1),
            ("7 MOD -3", 1),
            ("32767 + 1", -32768),
            ("-32768 - 1", 32767),
            ("ABS(-4)", 4),
            ("MIN(3, 9)", 3),
            ("MAX(3, 9)", 9),
            ("LIMIT(0, 12, 10)", 10),
        ],
    )
    def test_int(self, expr, expected):
        assert run_vars(f"x := {expr};", "VAR x : INT; END_VAR")["p.x"] == expected

    def test_dint_wraps_at_32_bits(self):
        v = run_vars("x := 2147483647; x := x + 1;", "VAR x : DINT; END_VAR")
        assert v["p.x"] == -2147483648

    def test_real_to_int_truncates(self):
        assert run_vars("x := r;", "VAR x : INT; r : REAL := 2.9; END_VAR")["p.x"] == 2

    @pytest.mark.parametrize("op", ["/", "MOD"])
    def test_by_zero_faults(self, op):
        with pytest.raises(RuntimeFault):
            run_vars(f"x := 5 {op} z;", "VAR x : INT; z : INT; END_VAR")

    def test_loop_limit(self):
        p = project_from(one_program("WHILE TRUE DO x := x + 1; END_WHILE;", "VAR x : DINT; END_VAR"))
        state = init_state(p, ScanConfig.for_project(p, loop_limit=50))
        with pytest.raises(RuntimeFault):
            run_cycle(state)

    def test_exit_and_return(self):
        body = """
FOR i := 1 TO 10 DO
    IF i = 4 THEN
        EXIT;
    END_IF;
    s := s + i;
END_FOR;
RETURN;
s := 100;
"""
        assert run_vars(body, "VAR i : INT; s : INT; END_VAR")["p.s"] == 6

    def test_case_without_match_is_noop(self):
        body = "CASE x OF 1: y := 1; 2: y := 2; END_CASE;"
        assert run_vars(body, "VAR x : INT := 9; y : INT := 5; END_VAR")["p.y"] == 5

    def test_function_frame_reset_per_call(self):
        extra = """
FUNCTION Count : INT
VAR n : INT; END_VAR
n := n + 1;
Count := n;
END_FUNCTION
FUNCTION_BLOCK Keep
VAR_OUTPUT n : INT; END_VAR
n := n + 1;
END_FUNCTION_BLOCK
"""
        v = run_vars("a := Count(); Keep(n => b);", "VAR a : INT; b : INT; END_VAR", cycles=3, extra=extra)
        assert (v["p.a"], v["p.b"]) == (1, 3)


class TestSfc:
    SRC = """
VAR_GLOBAL
    go AT %I* : BOOL;
    alt AT %I* : BOOL;
    log AT %Q* : DINT;
END_VAR
FUNCTION_BLOCK Seq
STEP Idle INITIAL
    ACTION Enter QUALIFIER P1;
    ACTION Stay QUALIFIER N;
    ACTION Leave QUALIFIER P0;
END_STEP
STEP A
END_STEP
STEP B
END_STEP
TRANSITION FROM Idle TO A WHEN go END_TRANSITION
TRANSITION FROM Idle TO B WHEN go OR alt END_TRANSITION
TRANSITION FROM A TO Idle WHEN NOT go END_TRANSITION
TRANSITION FROM B TO Idle WHEN NOT alt END_TRANSITION
ACTION Enter:
    log := log * 10 + 1;
END_ACTION
ACTION Stay:
    log := log * 10 + 2;
END_ACTION
ACTION Leave:
    log := log * 10 + 3;
END_ACTION
END_FUNCTION_BLOCK
PROGRAM P
Seq();
END_PROGRAM
TASK T (INTERVAL := T#10ms, PRIORITY := 1) : P;
"""

    def test_qualifier_order(self):
        state = init_state(project_from(self.SRC))
        _, out = run_cycle(state)
        assert out["log"] == 12  # P1 then N
        _, out = run_cycle(state, {"go": True})
        assert out["log"] == 1223  # N, then P0 on firing
        assert state.sfc_state["Seq"] == ("A", True)

    def test_first_true_transition_fires(self):
        state = init_state(project_from(self.SRC))
        run_cycle(state, {"go": True, "alt": True})
        assert state.sfc_state["Seq"][0] == "A"
        state = init_state(project_from(self.SRC))
        run_cycle(state, {"alt": True})
        assert state.sfc_state["Seq"][0] == "B"

    def test_uncalled_chart_does_not_evolve(self, demo_project):
        state = init_state(demo_project)
        run_cycle(state, {"i_pallet": True})
        assert state.sfc_state["LiftSeq"] == ("Lowered", True)  # automatic mode not entered


class TestTraceOps:
    def make_state(self, n: int):
        src = one_program("\n".join(f"IF x = {k} THEN x := 0; END_IF;" for k in range(n)), "VAR x : INT; END_VAR")
        p = project_from(src)
        ip, db = instrument(p, build_model(p))
        return init_state(ip.base), db

    def test_tpr_and_reset(self):
        state, db = self.make_state(3)
        tpr_op(state, 0)
        tpr_op(state, 5)
        tpr_op(state, 5)
        assert [i for i, v in enumerate(state.tpa) if v] == [0, 5]
        tp_reset_op(state)
        tp_reset_op(state)
        assert state.tpa == [False] * (db.max_tp + 1)
        with pytest.raises(RuntimeFault):
            tpr_op(state, db.max_tp + 1)

    @given(st.lists(st.integers(min_value=0, max_value=11)))
    def test_tpr_set_oracle(self, ids):
        state, _ = self.make_state(6)
        for i in ids:
            tpr_op(state, i)
        assert {i for i, v in enumerate(state.tpa) if v} == set(ids)

    def test_format(self):
        assert format_trace({42: True, 43: True, 44: False, 45: False}) == "42:true, 43:true, 44:false, 45:false"
        assert format_trace([False, False]) == "0:false, 1:false"

    def test_save_snapshot_and_timing(self):
        state, db = self.make_state(300)  # 600 points -> 3 save cycles
        assert save_cycles(len(state.tpa)) == 3
        tpr_op(state, 1)
        tp_save_op(state, "a.trace")
        with pytest.raises(SaveInProgress):
            tp_save_op(state, "b.trace")
        with pytest.raises(SaveInProgress):
            tp_reset_op(state)
        cycles = 0
        while state.pending_save is not None:
            run_cycle(state)  # the program records more points meanwhile
            cycles += 1
        assert cycles == 3
        assert state.last_save.done
        text = state.saved_files["a.trace"]
        pairs = dict(item.split(":") for item in text.split(", "))
        assert [k for k, v in pairs.items() if v == "true"] == ["1"]
        assert len(pairs) == db.max_tp + 1
        assert sum(state.tpa) > 1

    def test_all_false_file(self):
        state, db = self.make_state(2)
        tp_save_op(state, "z.trace")
        idle_cycle(state)
        assert state.saved_files["z.trace"] == ", ".join(f"{i}:false" for i in range(db.max_tp + 1))

    def test_save_writes_into_dir(self, tmp_path):
        p = project_from(one_program("x := 1;", "VAR x : INT; END_VAR"))
        ip, _ = instrument(p, build_model(p))
        state = init_state(ip.base, ScanConfig.for_project(ip.base, save_dir=str(tmp_path)))
        run_cycle(state)
        tp_save_op(state, "t1.trace")
        run_cycle(state)
        assert (tmp_path / "t1.trace").read_text() == "0:true"

    @given(st.integers(min_value=0, max_value=20000))
    def test_save_cycle_rule(self, n):
        k = save_cycles(n)
        assert 1 <= k <= MAX_SAVE_CYCLES
        assert k == max(1, min(10, math.ceil(n / 256)))

    def test_save_from_structured_text(self, signfb_instrumented):
        ip, _ = signfb_instrumented
        harness = """
PROGRAM Harness
VAR_INPUT go : BOOL; END_VAR
VAR_OUTPUT done : BOOL; END_VAR
VAR ok : BOOL; END_VAR
IF NOT go THEN
    ok := tp_reset();
END_IF;
tp_save(xExecute := go, szFilename := 'st.trace', xDone => done);
END_PROGRAM
TASK Tracing (INTERVAL := T#10ms, PRIORITY := 2) : Harness;
"""
        p = parse_project(list(ip.sources) + [("harness.st", harness)])
        state = init_state(p)
        run_cycle(state, {"sensor": 3})
        run_cycle(state, {"Harness.go": True})
        assert "st.trace" in state.saved_files  # 46 points -> one save cycle
        assert state.vars["harness.done"] is False  # set on the following scan
        run_cycle(state, {"Harness.go": True})
        assert state.vars["harness.done"] is True
        assert state.saved_files["st.trace"].startswith("0:true, 1:false")


def _make_pair(seed):
    p = generate_project(seed)
    ip, db = instrument(p, build_model(p))
    return p, ip, db


@given(st.integers(min_value=0, max_value=3000))
@settings(max_examples=15)
def test_preservation_and_visit_oracle(seed):
    p, ip, db = _make_pair(seed)
    a, b = init_state(p), init_state(ip.base)
    rng = random.Random(seed)
    for _ in range(150):
        inputs = random_inputs(p, rng)
        assert run_cycle(a, inputs)[1] == run_cycle(b, inputs)[1]
        for chart in b.sfc_state.values():
            assert isinstance(chart[0], str)
    assert {i for i, v in enumerate(b.tpa) if v} == visited_from_log(b, db)


def test_determinism(demo_project):
    def run():
        state = init_state(demo_project)
        rng = random.Random(4)
        outs = [run_cycle(state, random_inputs(demo_project, rng))[1] for _ in range(300)]
        return outs, state.vars

    assert run() == run()


@pytest.mark.parametrize(
    "text, dtype, value",
    [("TRUE", DataType.BOOL, True), ("0", DataType.BOOL, False), ("T#1s", DataType.TIME, 1000),
     ("16#FF", DataType.INT, 255), ("-3", DataType.DINT, -3), ("2.5", DataType.REAL, 2.5)],
)  # fmt: skip
def test_parse_value(text, dtype, value):
    assert parse_value(text, dtype) == value


def test_parse_value_rejects_garbage():
    with pytest.raises(ValueError):
        parse_value("maybe", DataType.BOOL)
