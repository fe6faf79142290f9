import dataclasses
import json
import math

import numpy as np
import pytest

from conftest import FAST, J, UNIT, step_maximal_oracle
from oscnorm.decompose import DecompositionError, blo_upper_decomposition, coifman_rochberg, verify_decomposition
from oscnorm.functions import Const, ExpScale, GridFunction, LogNegLog, NegLog, step_function


def test_constant_weight_gives_unit_factor():
    for eta in (0.1, 0.5, 0.9):
        d = coifman_rochberg(Const(1.0), UNIT, eta, FAST)
        np.testing.assert_allclose(d.b.values, 1.0, rtol=1e-14)
        assert d.g == Const(1.0)
        assert d.epsilon == pytest.approx(1 / (1 + eta))
        assert verify_decomposition(d, Const(1.0)) == 0.0


def test_neglog_factor_bounds_and_residual():
    d = coifman_rochberg(NegLog(), J)
    assert d.source_a1 == pytest.approx(2.0, rel=1e-9)
    assert d.a_lower == pytest.approx(1 / (4 * math.e), rel=1e-9)
    assert d.b.values.min() >= 1 / (4 * math.e)
    assert d.b.values.max() <= 1 + 1e-9
    assert verify_decomposition(d, NegLog()) <= 1e-6


def test_perturbed_factor_shows_in_residual():
    d = coifman_rochberg(NegLog(), J)
    bad = dataclasses.replace(d, b=GridFunction(d.b.grid, 1.1 * d.b.values))
    assert verify_decomposition(bad, NegLog()) == pytest.approx(0.10, rel=1e-9)


def test_two_level_step_against_exact_maximal():
    breaks, values = [0.0, 0.3, 1.0], np.array([1.0, 4.0])
    w = step_function(breaks, values)
    eta = 0.5
    d = coifman_rochberg(w, UNIT, eta, FAST)
    g = step_function(breaks, values ** (1 + eta))
    x = d.b.grid.nodes
    Mg = np.array([step_maximal_oracle(g, xi, 0.0, 1.0) for xi in x])
    np.testing.assert_allclose(d.Mg.values, Mg, rtol=1e-12)
    np.testing.assert_allclose(d.b.values, w(x) / Mg ** (1 / (1 + eta)), rtol=1e-12)
    assert verify_decomposition(d, w) <= 1e-12


def test_eta_outside_unit_interval_rejected():
    with pytest.raises(ValueError):
        coifman_rochberg(NegLog(), J, 1.5)


def test_weight_without_a1_bound_rejected():
    # x^{-2} on (0, 1) has no finite A1 estimate
    with pytest.raises(DecompositionError):
        coifman_rochberg(ExpScale(NegLog(), 0.5), UNIT, 0.5, FAST)


def test_decomposition_json():
    d = coifman_rochberg(NegLog(), J, None, FAST)
    out = json.loads(d.to_json(residual=0.0))
    assert out["ambient"] == J.as_list() and out["residual"] == 0.0
    assert out["b_min"] >= out["a_lower"]


@pytest.mark.parametrize("c", [2.0, -3.0, 0.1])
def test_blo_decomposition_of_constants(c):
    d = blo_upper_decomposition(Const(c), UNIT)
    assert d.norm_bound <= abs(c) + 1e-2
    assert math.isnan(d.ratio)
    np.testing.assert_allclose(d.reconstruct(), c, rtol=1e-14)


@pytest.mark.parametrize("f,baseline", [
    (LogNegLog(), 1.8516256433671072),
    (NegLog(), 7.5335077679374844),
])
def test_blo_decomposition_baselines(f, baseline):
    d = blo_upper_decomposition(f, J)
    assert d.norm_bound == pytest.approx(baseline, rel=1e-6)
    assert d.norm_bound >= d.blo
    x = d.decomposition.b.grid.nodes
    np.testing.assert_allclose(d.reconstruct(), f(x), rtol=1e-12, atol=1e-12)
    out = json.loads(d.to_json())
    assert out["norm_bound"] == d.norm_bound
