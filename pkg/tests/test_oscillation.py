import math

import numpy as np
import pytest

from conftest import FAST, J, UNIT
from oscnorm.domain import Interval, NumericConfig
from oscnorm.functions import Const, JumpEta, LogNegLog, NegLog, pwl_function, step_function
from oscnorm.oscillation import (
    anchored_agrees,
    blo_seminorm,
    bmo_seminorm,
    brute_force_oracle,
    john_nirenberg_decay,
    level_set_measure,
    lower_oscillation,
    mean_oscillation,
    modulus,
    vanishing_profile,
    w_modulus,
)

JUMP = JumpEta.geom_double()
CFG = NumericConfig(grid_size=128, refine_levels=2)


def test_mean_oscillation_examples():
    assert mean_oscillation(Const(4.0), UNIT) == 0.0
    half = step_function([0.0, 0.5, 1.0], [2.0, 0.0])
    assert mean_oscillation(half, UNIT) == pytest.approx(1.0, rel=1e-13)
    assert mean_oscillation(NegLog(), UNIT) == pytest.approx(2 / math.e, rel=1e-10)


def test_lower_oscillation_examples():
    assert lower_oscillation(Const(-1.0), UNIT) == 0.0
    for b in (1.0, 0.3, 1e-5):
        assert lower_oscillation(NegLog(), Interval(0, b)) == pytest.approx(1.0, rel=1e-12)
    a1, a2 = JUMP.levels[1], JUMP.levels[2]
    d = a1 / 100
    expected = (a1 - a2) / (a1 + d - a2)
    assert lower_oscillation(JUMP, Interval(a2, a1 + d)) == pytest.approx(expected, rel=1e-12)
    assert lower_oscillation(JUMP, Interval(a2, a1 + 1e-8 * a1)) > 1 - 1e-7


def test_seminorm_examples():
    assert blo_seminorm(Const(3.0), UNIT, FAST).value == 0.0
    assert bmo_seminorm(Const(3.0), UNIT, FAST).value == 0.0
    rep = blo_seminorm(NegLog(), UNIT, CFG)
    assert rep.value == pytest.approx(1.0, rel=1e-9)
    assert rep.ambient == UNIT and rep.kind == "blo"
    assert anchored_agrees(rep)
    assert blo_seminorm(LogNegLog(), J, CFG).value <= math.log(2) + 1e-9


def test_bmo_of_neglog_is_attained_on_left_anchored_intervals():
    # -log x is dilation invariant on (0, b), so every left-anchored interval gives 2/e
    assert bmo_seminorm(NegLog(), UNIT, CFG).value == pytest.approx(2 / math.e, rel=1e-6)


def test_jump_blo_is_left_anchored_series():
    # (0, a_1 + d) with d -> 0: average tends to sum_{i>=1} a_i / a_1, infimum 0
    lv = JUMP.levels
    expected = math.fsum(lv[1:]) / lv[1]
    assert expected == pytest.approx(1.0093650443386197, rel=1e-14)
    assert blo_seminorm(JUMP, J, CFG).value == pytest.approx(expected, rel=1e-9)


@pytest.mark.parametrize("h", [0.5, 1.0, 3.0])
def test_single_step_oracle(h):
    f = step_function([0.0, 0.4, 1.0], [h, 0.0])
    assert brute_force_oracle(f, "blo") == pytest.approx(h, rel=1e-12)
    assert blo_seminorm(f, UNIT, FAST).value == pytest.approx(h, rel=1e-9)


def test_two_step_bump_bmo_matches_oracle():
    f = step_function([0.0, 0.3, 0.6, 1.0], [0.0, 1.0, 0.0])
    oracle = brute_force_oracle(f, "bmo")
    assert 0 < oracle <= 1
    assert bmo_seminorm(f, UNIT, FAST).value == pytest.approx(oracle, abs=1e-9)
    assert brute_force_oracle(step_function([0.0, 1.0], [2.0]), "bmo") == 0.0


def test_oracle_refuses_large_inputs():
    f = step_function(np.linspace(0, 1, 20), np.arange(19.0) % 3)
    with pytest.raises(ValueError):
        brute_force_oracle(f, "blo")


def test_modulus_trivia():
    assert w_modulus(Const(1.0), UNIT, 0.1) == 0.0
    f = pwl_function([0.0, 0.5, 1.0], [0.0, 1.0, 0.0])
    assert w_modulus(f, UNIT, 1.0, FAST) == pytest.approx(blo_seminorm(f, UNIT, FAST).value, rel=1e-9)
    with pytest.raises(ValueError):
        modulus(f, UNIT, 2.0)


def test_logneglog_lower_profile_decreases_away_from_zero():
    I0 = Interval(math.exp(-math.exp(4)), math.exp(-1))
    ladder = [0.1, 0.01, 1e-3, 1e-4, 1e-6, 1e-9, 1e-12, 1e-18]
    prof = vanishing_profile(LogNegLog(), I0, "lower", ladder, FAST)
    assert np.all(np.diff(prof[:, 1]) < 0)
    # left-anchored windows at the bottom of I0 decay like 1/(-log a)
    assert prof[-1, 1] < 1.1 / -math.log(1e-18)


def test_profile_zero_for_constants_and_vanishing_for_lipschitz():
    prof = vanishing_profile(Const(2.0), UNIT, "mean", [0.5, 0.1])
    np.testing.assert_array_equal(prof[:, 1], 0.0)
    # -log x on (0.1, 1) is Lipschitz with constant 10, so W_a <= 10 a
    prof = vanishing_profile(NegLog(), Interval(0.1, 1.0), "lower", [0.1, 0.01, 1e-3], FAST)
    assert np.all(prof[:, 1] <= 10 * prof[:, 0] + 1e-12)


def test_jump_lower_profile_stays_at_one():
    prof = vanishing_profile(JUMP, J, "lower", [0.1, 1e-3, 1e-6, 1e-12], FAST)
    assert np.all(prof[:, 1] >= 1 - 1e-3)


def test_profile_ladder_validation():
    with pytest.raises(ValueError):
        vanishing_profile(NegLog(), UNIT, "lower", [0.1, 0.2])


def test_level_set_measure_of_neglog():
    # |{x in (0,1): |-log x - 1| > lam}| = e^{-(1+lam)} for lam >= 1
    for lam in (1.0, 2.0, 5.0):
        assert level_set_measure(NegLog(), UNIT, 1.0, lam) == pytest.approx(math.exp(-1 - lam), rel=1e-12)


def test_john_nirenberg_fit_on_neglog():
    # for lam >= 1 only the left end contributes, so the measure is e^{-1-lam}
    fit = john_nirenberg_decay(NegLog(), UNIT, np.linspace(1.0, 6.0, 11), FAST)
    assert fit.decays and fit.r2 > 0.999
    assert fit.slope == pytest.approx(-1.0, rel=1e-6)
    with pytest.raises(ValueError):
        john_nirenberg_decay(Const(1.0), UNIT)


def test_report_serialises():
    rep = blo_seminorm(NegLog(), UNIT, FAST)
    d = rep.to_dict()
    assert d["kind"] == "blo" and d["ambient"] == [0.0, 1.0]
    assert '"value"' in rep.to_json()
