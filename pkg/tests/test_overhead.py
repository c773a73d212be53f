from __future__ import annotations

import csv
import io
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from plccov import overhead as oh

costs = st.floats(min_value=0.01, max_value=50, allow_nan=False)
cycles = st.floats(min_value=0.1, max_value=1000, allow_nan=False)
calls = st.integers(min_value=0, max_value=100_000)


class TestCalibrate:
    def test_measured_quotient(self):
        assert oh.calibrate(0.26, 395) == pytest.approx(0.658, abs=5e-4)

    def test_zero_delta(self):
        assert oh.calibrate(0.0, 12) == 0.0

    def test_grid_bottom_row(self):
        # 5.44 % of 10 ms over 1000 calls
        assert oh.calibrate(0.544, 1000) == pytest.approx(0.544)

    @pytest.mark.parametrize("delta, n", [(0.3, 0), (0.3, -1), (-0.1, 5)])
    def test_rejects(self, delta, n):
        with pytest.raises(ValueError):
            oh.calibrate(delta, n)

    @given(st.floats(min_value=0, max_value=100, allow_nan=False), st.integers(1, 10_000), cycles)
    def test_inverse_of_estimate(self, delta, n, t):
        c = oh.calibrate(delta, n)
        assert oh.estimate(n, t, c).absolute_time == pytest.approx(delta * 1000, rel=1e-12, abs=1e-9)


class TestEstimate:
    def test_grid_cell(self):
        assert round(oh.estimate(100, 10, 0.544).percent, 2) == 0.54

    def test_bottom_right(self):
        est = oh.estimate(1000, 1, 0.544)
        assert est.percent == pytest.approx(54.4)
        assert abs(est.percent - 54.43) < 0.05
        assert est.within_headroom

    def test_zero_calls(self):
        assert oh.estimate(0, 7, 0.5).percent_of_cycle == 0.0

    def test_headroom_policy(self):
        assert not oh.estimate(1000, 1, 0.5443, headroom=0.5).within_headroom
        assert not oh.estimate(100, 10, 0.5443, application_share=0.80).within_headroom
        assert oh.estimate(100, 10, 0.5443, application_share=0.79).within_headroom

    @given(calls, cycles, costs)
    def test_formula(self, n, t, c):
        e = oh.estimate(n, t, c)
        assert e.percent_of_cycle == pytest.approx(n * c / (1000 * t), rel=1e-12)
        assert e.absolute_time == pytest.approx(n * c, rel=1e-12)

    @given(st.integers(0, 10_000), cycles, costs, st.integers(2, 9))
    def test_linearity(self, n, t, c, k):
        base = oh.estimate(n, t, c).percent_of_cycle
        assert oh.estimate(k * n, t, c).percent_of_cycle == pytest.approx(k * base, rel=1e-12, abs=1e-15)
        assert oh.estimate(n, t, k * c).percent_of_cycle == pytest.approx(k * base, rel=1e-12, abs=1e-15)
        assert oh.estimate(n, k * t, c).percent_of_cycle == pytest.approx(base / k, rel=1e-12, abs=1e-15)


class TestParams:
    @pytest.mark.parametrize(
        "kw",
        [dict(per_call_cost=0), dict(calls_per_cycle=-1), dict(cycle_time=0), dict(headroom_fraction=0),
         dict(headroom_fraction=1.5)],
    )  # fmt: skip
    def test_invariants(self, kw):
        base = dict(per_call_cost=0.5, calls_per_cycle=10, cycle_time=10.0)
        with pytest.raises(ValueError):
            oh.OverheadParams(**{**base, **kw})

    def test_default_headroom(self):
        assert oh.OverheadParams(0.5, 10, 10.0).headroom_fraction == 0.80


class TestGrid:
    def test_matches_reference_grid(self):
        grid = oh.reproduce_table2(0.5443)
        assert len(grid) == 7 and all(len(r) == 3 for r in grid)
        for row, pub in zip(grid, oh.REFERENCE_GRID):
            for a, b in zip(row, pub):
                assert abs(a - b) <= 0.01 + 1e-9
        assert oh.grid_deviation(0.5443) <= 0.01 + 1e-9

    def test_measured_constant_does_not_match(self):
        # the measured per-call cost implies a visibly different grid
        assert oh.grid_deviation(oh.calibrate(0.26, 395)) > 1.0

    def test_zero_cost_grid(self):
        assert all(v == 0 for row in oh.reproduce_table2(0.0) for v in row)

    @given(st.floats(min_value=0.01, max_value=5, allow_nan=False))
    def test_doubling_cost_doubles_grid(self, c):
        a, b = oh.reproduce_table2(c), oh.reproduce_table2(2 * c)
        for ra, rb in zip(a, b):
            for x, y in zip(ra, rb):
                assert y == pytest.approx(2 * x, rel=1e-12)

    def test_csv_shape(self):
        rows = list(csv.reader(io.StringIO(oh.grid_csv(oh.reproduce_table2()))))
        assert rows[0] == ["calls_per_cycle", "10ms", "5ms", "1ms"]
        assert len(rows) == 8
        assert rows[-1] == ["1000", "5.44", "10.89", "54.43"]

    def test_text_alignment(self):
        lines = oh.grid_text(oh.reproduce_table2()).splitlines()
        assert len(lines) == 8
        assert len({len(ln) for ln in lines}) == 1


class TestMaxCalls:
    def test_example(self):
        assert oh.max_trace_calls(10, 0.544, 0.05) == 919

    def test_zero_budget(self):
        assert oh.max_trace_calls(10, 0.544, 0.0) == 0

    @given(cycles, costs, st.floats(min_value=0, max_value=1, allow_nan=False))
    def test_inverse_consistency(self, t, c, budget):
        n = oh.max_trace_calls(t, c, budget)
        assert n >= 0
        assert oh.estimate(n, t, c).percent_of_cycle <= budget
        assert oh.estimate(n + 1, t, c).percent_of_cycle > budget or math.isclose(
            oh.estimate(n + 1, t, c).percent_of_cycle, budget, rel_tol=1e-12
        )
