import math

import pytest
from scipy.optimize import minimize_scalar

from conftest import FAST, J, UNIT
from oscnorm.domain import Interval, NumericConfig
from oscnorm.functions import Const, ExpScale, LogNegLog, NegLog, NegLogPow, step_function
from oscnorm.weights import (
    REVERSE_HOLDER_BOUND,
    a1_constant,
    a1_membership,
    gr_a1_closed_form,
    neglog_a1_on_initial_segment,
    reverse_holder_ratio,
    reverse_holder_search,
)

CFG = NumericConfig(grid_size=128, refine_levels=2)


def two_level_rh_oracle(lo, hi, eta):
    """Sup of the reverse Hoelder ratio of a two-valued step.

    Any interval straddling the jump sees the high value on a fraction ``t`` of
    its length, and every ``t`` in [0, 1] is reachable, so the sup is a 1-d maximum.
    """
    def neg(t):
        return -(((1 - t) * lo ** (1 + eta) + t * hi ** (1 + eta)) ** (1 / (1 + eta)) / ((1 - t) * lo + t * hi))

    return -minimize_scalar(neg, bounds=(0.0, 1.0), method="bounded", options={"xatol": 1e-14}).fun


def test_closed_forms():
    assert [gr_a1_closed_form(r) for r in (1, 2, 3)] == pytest.approx([2.0, 5.0, 16.0], rel=1e-14)
    assert gr_a1_closed_form(4) == pytest.approx(65.0, rel=1e-14)
    assert neglog_a1_on_initial_segment(math.e) == pytest.approx(1 + 1 / math.e)
    with pytest.raises(ValueError):
        gr_a1_closed_form(0)
    with pytest.raises(ValueError):
        neglog_a1_on_initial_segment(0.5)


def test_constant_weight():
    rep = a1_constant(Const(3.0), UNIT, FAST)
    assert rep.constant == pytest.approx(1.0, rel=1e-15)
    ok, rep = a1_membership(Const(3.0), UNIT, cfg=FAST)
    assert ok and rep.constant == pytest.approx(1.0)


def test_neglog_on_J():
    rep = a1_constant(NegLog(), J, CFG)
    assert rep.constant == pytest.approx(2.0, rel=1e-9)
    assert rep.ambient == J
    assert rep.witness.lo == 0.0


def test_neglog_on_Jk():
    I = Interval(0, math.exp(-math.e))
    assert a1_constant(NegLog(), I, CFG).constant == pytest.approx(1 + math.exp(-1), rel=1e-9)


def test_cube_of_neglog_member_with_sixteen():
    w = ExpScale(LogNegLog(), 1 / 3)
    ok, rep = a1_membership(w, J, cfg=CFG)
    assert ok
    assert rep.constant == pytest.approx(16.0, rel=1e-8)
    assert a1_constant(NegLogPow(3), J, CFG).constant == pytest.approx(16.0, rel=1e-8)


def test_non_integrable_power_is_not_member():
    # x^{-2} is not locally integrable at 0
    ok, rep = a1_membership(ExpScale(NegLog(), 0.5), UNIT, cfg=FAST)
    assert not ok


def test_nonpositive_weight_rejected():
    with pytest.raises(ValueError):
        a1_constant(step_function([0.0, 0.5, 1.0], [1.0, 0.0]), UNIT, FAST)


def test_reverse_holder_const():
    eta, c = reverse_holder_search(Const(1.0), UNIT, FAST)
    assert eta == 0.5 and c == pytest.approx(1.0, rel=1e-14)


def test_reverse_holder_neglog():
    eta, c = reverse_holder_search(NegLog(), J, FAST)
    assert 2.0**-12 <= eta < 1 and c < REVERSE_HOLDER_BOUND


def test_reverse_holder_two_level_step_matches_oracle():
    w = step_function([0.0, 0.4, 1.0], [1.0, 10.0])
    eta, c = reverse_holder_search(w, UNIT, FAST)
    assert eta == 0.5
    exact = two_level_rh_oracle(1.0, 10.0, 0.5)
    assert exact == pytest.approx(1.3442430974280486, rel=1e-12)
    # node-pair intervals approach the sup from below as the grid refines
    assert c <= exact * (1 + 1e-12) and c == pytest.approx(exact, rel=1e-4)
    r, _ = reverse_holder_ratio(w, UNIT, 0.25, NumericConfig(grid_size=512))
    assert r <= two_level_rh_oracle(1.0, 10.0, 0.25) * (1 + 1e-12)
    assert r == pytest.approx(two_level_rh_oracle(1.0, 10.0, 0.25), rel=1e-8)


def test_report_json():
    rep = a1_constant(NegLog(), J, FAST)
    assert rep.to_dict()["ambient"] == J.as_list()
    assert '"constant"' in rep.to_json()
