import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import example1, example2, example3
from ltvcommute.expr import Const, DomainError, parse_expr
from ltvcommute.model import (
    CommutativityConstants,
    InitialState,
    LtvSystem,
    PiecewiseCoefficient,
    SwitchingSignal,
    apply_switching,
    breakpoints,
    coefficient_at,
    refine,
)


def test_example2_a1_values(ex2):
    a1 = ex2.coefficients[1]
    assert coefficient_at(a1, 0.5) == -1
    assert coefficient_at(a1, 1.0, side="right") == 9
    assert coefficient_at(a1, 1.0, side="left") == -1
    assert a1.jump(1.0) == 10


def test_constant_coefficient_derivative_zero():
    c = PiecewiseCoefficient.smooth(Const(4.0))
    assert coefficient_at(c, 2.0, order=1) == 0
    assert coefficient_at(c, 2.0, order=2) == 0


def test_derivative_taken_per_piece():
    c = PiecewiseCoefficient.from_pieces([(0, 1, "t^2"), (1, 2, "3*t")])
    assert c.value(0.5, 1) == 1.0
    assert c.value(1.0, 1, "left") == 2.0
    assert c.value(1.0, 1, "right") == 3.0
    assert c.value(1.5, 2) == 0.0


def test_outside_horizon():
    c = PiecewiseCoefficient.from_pieces([(0, 1, "t")])
    with pytest.raises(ValueError):
        c.value(-0.1)
    with pytest.raises(ValueError):
        c.value(1.0)  # half-open on the right
    assert c.value(1.0, side="left") == 1.0
    with pytest.raises(ValueError):
        c.values(np.array([0.5, 2.0]))


def test_pieces_must_be_contiguous():
    with pytest.raises(ValueError):
        PiecewiseCoefficient.from_pieces([(0, 1, "t"), (1.5, 2, "t")])
    with pytest.raises(ValueError):
        PiecewiseCoefficient.from_pieces([(0, 0, "t")])
    with pytest.raises(ValueError):
        SwitchingSignal(((0, 1, 0), (2, 3, 1)))


def test_apply_switching_example2():
    sig = SwitchingSignal.from_starts([0, 1, 3, 4.5], [0, 10, 0, 10])
    a1 = apply_switching((-1, 1), sig)
    assert [(p.start, p.end, p.expr.value) for p in a1.pieces] == [
        (0, 1, -1), (1, 3, 9), (3, 4.5, -1), (4.5, math.inf, 9)]
    a0 = apply_switching((-2, 2), sig)
    assert [p.expr.value for p in a0.pieces] == [-2, 18, -2, 18]
    flat = apply_switching((5, 0), sig)
    assert flat.is_smooth and flat.value(100.0) == 5


@given(st.floats(-50, 50), st.floats(-50, 50),
       st.lists(st.floats(-20, 20), min_size=1, max_size=6), st.data())
def test_apply_switching_exact(base, gain, levels, data):
    starts = list(range(len(levels)))
    sig = SwitchingSignal.from_starts(starts, levels)
    c = apply_switching((base, gain), sig)
    t = data.draw(st.floats(0, len(levels) + 3))
    assert c.value(t) == base + gain * sig(t)


@given(st.floats(0, 10))
def test_left_right_agree_off_breakpoints(t):
    a1 = example2().coefficients[1]
    if t in (1.0, 3.0, 4.5) or t == 0.0:
        return
    assert a1.value(t, side="left") == a1.value(t, side="right")


def test_values_vectorized_matches_scalar(ex2):
    ts = np.array([0.0, 0.5, 1.0, 2.9, 3.0, 4.5, 5.0])
    a1 = ex2.coefficients[1]
    np.testing.assert_array_equal(a1.values(ts), [a1.value(t) for t in ts])
    np.testing.assert_array_equal(a1.values(ts, side="left")[1:], [a1.value(t, side="left") for t in ts[1:]])


def test_breakpoints():
    assert breakpoints(example2(), (0, 6)) == [1, 3, 4.5]
    assert breakpoints(example1(), (1, 5)) == []
    assert breakpoints(example3(), (0, 4)) == [1]
    assert breakpoints(example2(), (1, 4)) == [3]


def test_refine_common_pieces():
    a = PiecewiseCoefficient.from_pieces([(0, 2, "1"), (2, 5, "2")])
    b = PiecewiseCoefficient.from_pieces([(1, 3, "t"), (3, 6, "2*t")])
    rows = refine([a, b])
    assert [(s, e) for s, e, _ in rows] == [(1, 2), (2, 3), (3, 5)]
    assert [str(x) for x in rows[1][2]] == ["2.0", "t"]


def test_system_orders_and_access(ex1):
    assert ex1.order == 2
    assert ex1.coefficient(2) is ex1.leading
    assert LtvSystem.first_order("t", 1).order == 1
    assert LtvSystem.scalar(2).order == 0
    with pytest.raises(ValueError):
        LtvSystem(())


def test_check_leading_vanishing():
    s = LtvSystem.second_order("t", 1, 1)
    with pytest.raises(DomainError):
        s.check_leading(-1, 1)  # zero not on the sample grid, caught by the sign change
    s.check_leading(0.5, 2)
    with pytest.raises(DomainError):
        LtvSystem.second_order("t^2", 1, 1).check_leading(-1, 1)


def test_check_leading_singular_coefficient(ex1):
    with pytest.raises(DomainError):
        ex1.check_leading(0, 1)
    ex1.check_leading(0.5, 5)


def test_check_leading_horizon(ex2):
    with pytest.raises(DomainError):
        ex2.check_leading(-1, 1)
    s = LtvSystem.second_order(1, 1, 1, domain_start=2)
    with pytest.raises(DomainError):
        s.check_leading(1, 3)


def test_scalar_zero_gain():
    with pytest.raises(DomainError):
        LtvSystem.scalar(0).check_leading(0, 1)


def test_initial_state_and_constants():
    ic = InitialState(1.0, 2.0, -3.0)
    assert ic.vector(2) == [2.0, -3.0]
    assert ic.vector(1) == [2.0]
    assert ic.vector(0) == []
    assert InitialState(0.0).is_zero
    assert CommutativityConstants(1, 2, 3).partner_order == 2
    assert CommutativityConstants(0, 2, 3).partner_order == 1
    assert CommutativityConstants(0, 0, 3).partner_order == 0
    assert tuple(CommutativityConstants(1, 2, 3)) == (1.0, 2.0, 3.0)
