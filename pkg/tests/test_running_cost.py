import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mfg_inverse.running_cost import (
    RunningCost,
    check_admissible,
    evaluate,
    mode_function,
    parse_coefficient,
)
from mfg_inverse.spectral_domain import SpaceGrid

small = st.floats(-5, 5, allow_nan=False)


def test_evaluate_examples(space):
    F = RunningCost(2.0, (np.full(space.shape, 0.6),))
    m = np.full(space.shape, 1.1)
    assert np.allclose(evaluate(F, m), 2.0 * 0.1 + 0.6 * 0.01 / 2, atol=1e-15)
    assert np.all(evaluate(F, np.ones(space.shape)) == 0.0)


def test_evaluate_broadcasts_over_time(space):
    F = RunningCost(1.0, (mode_function(1, space), 0.2 * mode_function(2, space)))
    m = 1 + 0.01 * np.random.default_rng(3).standard_normal((5, space.points_per_axis))
    out = evaluate(F, m)
    assert out.shape == m.shape
    assert np.allclose(out[2], evaluate(F, m[2]))


@given(c1=small, f2=small, f3=small, z=st.floats(-0.5, 0.5))
def test_taylor_derivatives(c1, f2, f3, z):
    # the k-th derivative in m at m = 1 is F^(k); check by finite differences
    F = RunningCost(c1, (np.array(f2), np.array(f3)))
    h = 1e-3
    d1 = (evaluate(F, np.array(1 + h)) - evaluate(F, np.array(1 - h))) / (2 * h)
    assert d1 == pytest.approx(c1 + f3 * h**2 / 6, abs=1e-12)
    d2 = (evaluate(F, np.array(1 + h)) - 2 * evaluate(F, np.array(1.0))
          + evaluate(F, np.array(1 - h))) / h**2
    assert d2 == pytest.approx(f2, abs=1e-6 * (1 + abs(f2) + abs(c1) + abs(f3)))
    direct = c1 * z + f2 * z**2 / 2 + f3 * z**3 / 6
    assert evaluate(F, np.array(1 + z)) == pytest.approx(direct, abs=1e-12)


def test_coefficient_access(space):
    F = RunningCost(2.0, (mode_function(1, space),))
    assert np.all(F.coefficient(1, space) == 2.0)
    assert np.all(F.coefficient(3, space) == 0.0)
    assert F.order == 2
    G = F.with_coefficient(4, mode_function(2, space))
    assert G.order == 4 and np.all(G.coefficient(3, space) == 0.0)
    assert G.truncated(2).order == 2
    with pytest.raises(ValueError):
        F.coefficient(0, space)


@pytest.mark.parametrize("c1, ok", [(2.0, True), (1e-9, True), (0.0, False), (-1.0, False),
                                    (float("nan"), False)])
def test_admissibility(c1, ok):
    report = check_admissible(RunningCost(c1))
    assert bool(report) is ok
    if not ok:
        assert "(iii)" in str(report)


def test_non_finite_higher_coefficient():
    report = check_admissible(RunningCost(1.0, (np.array([1.0, np.inf]),)))
    assert not report and "(i)" in str(report)


def test_parse_coefficient(space):
    x = space.axis
    v = parse_coefficient("0.3*mode1 + 0.1*mode3 - 0.2", space)
    r2 = math.sqrt(2)
    expected = 0.3 * r2 * np.cos(np.pi * x) + 0.1 * r2 * np.cos(3 * np.pi * x) - 0.2
    assert np.allclose(v, expected, atol=1e-15)
    assert np.all(parse_coefficient("1.5e-1", space) == 0.15)
    assert np.allclose(parse_coefficient("-mode2", space), -mode_function(2, space))
    g = SpaceGrid(5)
    assert np.all(parse_coefficient("[1, 2, 3, 4, 5]", g) == [1, 2, 3, 4, 5])
    for bad in ("", "[1, 2]", "3*cos1", "mode"):
        with pytest.raises(ValueError):
            parse_coefficient(bad, g)


@given(arrays(float, 9, elements=st.floats(0.5, 1.5)))
def test_linear_cost_is_linear(m):
    F = RunningCost(3.0)
    assert np.allclose(evaluate(F, m), 3.0 * (m - 1.0))
