import math

import numpy as np
import pytest
from scipy.integrate import quad

from conftest import FAST, J, UNIT
from oscnorm.approx import (
    MollifierSpec,
    SweepResult,
    convolution_error,
    decreasing_rearrangement,
    distribution,
    k_of_r,
    mollify,
    truncation_sweep,
)
from oscnorm.domain import Grid, Interval, uniform_grid
from oscnorm.functions import Const, JumpEta, LogNegLog, NegLog, pwl_function, step_function

JUMP = JumpEta.geom_double()
TENT = pwl_function([0.0, 0.5, 1.0], [0.0, 1.0, 0.0])
SHAPES = ("triangle", "cosine_bump")


# -- truncation -------------------------------------------------------------------------


def test_truncation_of_bounded_function_vanishes():
    f = step_function([0.0, 0.4, 1.0], [1.5, -0.5])
    sw = truncation_sweep(f, UNIT, [2.0, 3.0], FAST)
    np.testing.assert_array_equal(sw.measured, 0.0)
    assert sw.bound_kind == "none"


def test_truncation_logneglog_first_level():
    sw = truncation_sweep(LogNegLog(), J, [1.0], FAST)
    assert sw.bound[0] == pytest.approx(math.log1p(math.exp(-1)), rel=1e-15)
    assert sw.bound[0] == pytest.approx(0.313262, abs=1e-6)
    assert sw.measured[0] <= sw.bound[0]
    assert sw.bound_kind == "upper"


def test_truncation_jump_stays_above_one():
    sw = truncation_sweep(JUMP, J, [1, 2, 3, 4], FAST)
    assert np.all(sw.measured >= 1 - 1e-3)


def test_truncation_level_validation():
    with pytest.raises(ValueError):
        truncation_sweep(NegLog(), UNIT, [0.0, 1.0])


def test_sweep_result_requires_increasing_params():
    with pytest.raises(ValueError):
        SweepResult([2.0, 1.0], [0.0, 0.0], [0.0, 0.0])


def test_sweep_csv_format():
    sw = SweepResult([0.1, 1.0], [1 / 3, 0.0], [math.nan, math.inf], [Interval(0, 1), None])
    lines = sw.to_csv().splitlines()
    assert lines[0] == "param,measured,bound,witness_lo,witness_hi"
    assert lines[1] == "0.1,0.333333333333,nan,0,1"
    assert lines[2] == "1,0,inf,nan,nan"


# -- mollification ----------------------------------------------------------------------


@pytest.mark.parametrize("shape", SHAPES)
def test_kernel_has_unit_mass_and_exact_cdf(shape):
    spec = MollifierSpec(0.2, shape)
    mass, _ = quad(lambda y: float(spec.kernel(y)), -0.2, 0.2, points=[0.0])
    assert mass == pytest.approx(1.0, rel=1e-12)
    for y in (-0.15, 0.0, 0.07):
        part, _ = quad(lambda s: float(spec.kernel(s)), -0.2, y, points=[0.0] if y > 0 else None)
        assert float(spec.cdf(y)) == pytest.approx(part, rel=1e-12)
    assert spec.C == 1.0
    assert float(np.max(spec.kernel(np.linspace(-0.2, 0.2, 401)))) == pytest.approx(spec.C / spec.eps)


def test_bad_specs():
    with pytest.raises(ValueError):
        MollifierSpec(0.0)
    with pytest.raises(ValueError):
        MollifierSpec(0.1, "box")


@pytest.mark.parametrize("shape", SHAPES)
def test_mollify_constant_and_unit_step(shape):
    g = uniform_grid(Interval(-0.5, 0.5), 11)
    out = mollify(Const(4.0), MollifierSpec(0.1, shape), g)
    np.testing.assert_array_equal(out.values, 4.0)
    step = step_function([-1.0, 0.0, 1.0], [0.0, 1.0])
    out = mollify(step, MollifierSpec(0.1, shape), g)
    assert out.values[5] == pytest.approx(0.5, rel=1e-14)
    assert out.values[0] == 0.0 and out.values[-1] == 1.0


@pytest.mark.parametrize("shape", SHAPES)
def test_mollify_pwl_against_direct_convolution(shape):
    f = pwl_function([0.0, 0.2, 0.6, 1.0], [1.0, -1.0, 2.0, 0.0])
    spec = MollifierSpec(0.05, shape)
    g = Grid(np.array([0.1, 0.19, 0.2, 0.23, 0.58, 0.61, 0.9]))
    out = mollify(f, spec, g)
    for x, v in zip(g.nodes, out.values):
        direct, _ = quad(lambda s: float(spec.kernel(x - s)) * float(f(s)), x - 0.05, x + 0.05,
                         points=[p for p in (0.2, 0.6, x) if abs(p - x) < 0.05], epsabs=1e-14, epsrel=1e-12)
        assert v == pytest.approx(direct, rel=1e-9, abs=1e-12)


def test_mollify_grid_must_clear_the_ends():
    with pytest.raises(ValueError):
        mollify(TENT, MollifierSpec(0.1), uniform_grid(Interval(0.05, 0.5), 5))


def test_convolution_error_constant():
    sw = convolution_error(Const(1.0), UNIT, [0.01, 0.1])
    np.testing.assert_array_equal(sw.measured, 0.0)
    np.testing.assert_array_equal(sw.bound, 0.0)


@pytest.mark.parametrize("shape", SHAPES)
def test_convolution_error_tent_linear(shape):
    eps = [1e-3, 1e-2, 1e-1]
    sw = convolution_error(TENT, UNIT, eps, shape, FAST)
    assert np.all(sw.measured <= sw.bound)
    # both columns scale like eps for a Lipschitz function
    np.testing.assert_allclose(sw.measured / sw.params, sw.measured[0] / sw.params[0], rtol=1e-6)
    assert np.all(sw.bound / sw.params <= 2 * 2 * 2 + 1e-9)


def test_convolution_error_logneglog_inner_interval():
    I0 = Interval(math.exp(-math.e**2), math.exp(-1))
    sw = convolution_error(LogNegLog(), I0, [1e-3], cfg=FAST)
    assert sw.measured[0] <= sw.bound[0]


def test_convolution_error_jump_bound_does_not_vanish():
    I0 = Interval(JUMP.levels[3], JUMP.levels[0])
    sw = convolution_error(JUMP, I0, [1e-5, 1e-4], cfg=FAST)
    assert np.all(sw.bound >= 2 * (1 - 1e-3))


# -- rearrangement ----------------------------------------------------------------------


def test_rearrangement_of_indicator():
    f = step_function([0.0, 0.25, 0.75, 1.0], [0.0, 1.0, 0.0])
    t = np.array([0.0, 0.1, 0.49, 0.5, 0.51, 0.9, 1.0])
    out = decreasing_rearrangement(f, UNIT, Grid(t))
    np.testing.assert_array_equal(out.values, [1, 1, 1, 0, 0, 0, 0])


def test_rearrangement_of_monotone_function_is_itself():
    t = np.array([1e-9, 1e-3, 0.2, 0.7, 0.999])
    out = decreasing_rearrangement(NegLog(), UNIT, Grid(t))
    np.testing.assert_allclose(out.values, -np.log(t), rtol=1e-12)


def test_rearrangement_of_constant():
    out = decreasing_rearrangement(Const(-2.5), UNIT, uniform_grid(Interval(0, 0.999), 5))
    np.testing.assert_array_equal(out.values, 2.5)


def test_distribution_of_neglog():
    lam = np.array([0.5, 1.0, 3.0])
    np.testing.assert_allclose(distribution(NegLog(), UNIT, lam), np.exp(-lam), rtol=1e-12)
    assert distribution(NegLog(), UNIT, 0.0) == 1.0


def test_rearrangement_grid_must_fit():
    with pytest.raises(ValueError):
        decreasing_rearrangement(NegLog(), J, uniform_grid(Interval(0, 1), 5))


# -- K(r) -------------------------------------------------------------------------------


def k_direct(r, n=12):
    return math.fsum(math.exp(-(math.exp(j) - math.e - r * j)) for j in range(1, n + 1))


def test_k_of_r_examples():
    v, tail = k_of_r(1, 10)
    # the j = 1 and j = 2 terms carry everything beyond 1e-6
    assert v == pytest.approx(math.e + math.exp(-(math.e**2 - math.e - 2)), rel=1e-6)
    assert v == pytest.approx(2.787481030512236, rel=1e-14)
    assert tail < 1e-8
    v0, _ = k_of_r(0)
    assert v0 == pytest.approx(1 + math.exp(-(math.e**2 - math.e)), rel=1e-4)
    assert 1 < v0 < 1.01


@pytest.mark.parametrize("r", [0, 0.5, 1, 2, 3, 5])
def test_k_of_r_matches_direct_sum(r):
    v, tail = k_of_r(r)
    assert v == pytest.approx(k_direct(r), rel=1e-13)
    assert 0 <= tail < 1e-8 * v


def test_k_of_r_terms_validation():
    with pytest.raises(ValueError):
        k_of_r(1, 3)
