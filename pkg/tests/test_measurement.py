import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfg_inverse.forward_solver import ForwardConfig
from mfg_inverse.measurement import (
    DirectOracle,
    EpsilonStencil,
    NoisyDerivativeWarning,
    NoisyOracle,
    StencilOracle,
    extract_mixed,
    extract_order1,
    extract_order2,
    measure,
    record_csv,
    richardson,
)
from mfg_inverse.running_cost import RunningCost, mode_function
from mfg_inverse.spectral_domain import SpaceGrid, TimeGrid, full_grid_basis

SPACE, TIME = SpaceGrid(33), TimeGrid(0.25, 40)
CFG = ForwardConfig(picard_tol=1e-14)
F = RunningCost(2.0, (0.3 * mode_function(1, SPACE), 0.2 * mode_function(2, SPACE)))
F1, F2 = mode_function(1, SPACE), mode_function(2, SPACE)
DIRECT = DirectOracle(F, SPACE, TIME, full_grid_basis(SPACE))


def test_measure_record_and_csv():
    rec = measure(F, CFG, 1 + 0.01 * F1, SPACE, TIME)
    assert rec.mass(SPACE) == pytest.approx(1.0, abs=1e-13)
    again = measure(F, CFG, 1 + 0.01 * F1, SPACE, TIME)
    assert np.array_equal(rec.u0, again.u0) and np.array_equal(rec.mT, again.mT)
    text = record_csv(rec, SPACE)
    assert text.startswith("# M=40") and "x,u0,mT" in text
    assert len(text.strip().splitlines()) == 1 + 5 + SPACE.points_per_axis


def test_measure_noise_is_seeded():
    a = measure(F, CFG, 1 + 0.01 * F1, SPACE, TIME, 1e-3, np.random.default_rng(4))
    b = measure(F, CFG, 1 + 0.01 * F1, SPACE, TIME, 1e-3, np.random.default_rng(4))
    clean = measure(F, CFG, 1 + 0.01 * F1, SPACE, TIME)
    assert np.array_equal(a.u0, b.u0)
    assert 0 < np.abs(a.u0 - clean.u0).max() < 1e-2 * np.abs(clean.u0).max()
    assert a.provenance["noise_level"] == 1e-3


def test_stencil_validation():
    with pytest.raises(ValueError):
        EpsilonStencil((1e-3, 1e-2))
    with pytest.raises(ValueError):
        EpsilonStencil((0.0,))
    with pytest.raises(ValueError):
        EpsilonStencil(scheme="backward")
    assert EpsilonStencil().nominal_order == 2
    assert EpsilonStencil(scheme="one-sided").nominal_order == 1


def test_richardson_polynomial():
    eps = [0.1, 0.05, 0.025]
    vals = [np.array(3.0 + 7 * e**2) for e in eps]
    ex, ratio = richardson(vals, eps, 2)
    assert float(ex) == pytest.approx(3.0, abs=1e-13)
    assert ratio == pytest.approx(4.0, rel=1e-12)
    assert richardson(vals[:1], eps[:1])[1] is None


@pytest.mark.parametrize("scheme, tol", [("central", 1e-7), ("one-sided", 1e-4)])
def test_first_order_matches_direct(scheme, tol):
    rec = extract_order1(F, CFG, F1, EpsilonStencil(scheme=scheme), SPACE, TIME)
    exact = DIRECT.linearized([F1])
    assert np.abs(rec.u0 - exact.u0).max() < tol
    assert np.abs(rec.mT - exact.mT).max() < tol
    assert abs(rec.m_mean(SPACE)) < 1e-8
    if scheme == "central":
        assert rec.richardson_ratio == pytest.approx(4.0, rel=0.05)
        assert not rec.warnings


def test_second_order_matches_direct():
    rec = extract_order2(F, CFG, F1, F2, EpsilonStencil(), SPACE, TIME)
    exact = DIRECT.linearized([F1, F2])
    scale = np.abs(exact.mT).max() + np.abs(exact.u0).max()
    assert np.abs(rec.u0 - exact.u0).max() < 1e-5 * scale
    assert np.abs(rec.mT - exact.mT).max() < 1e-5 * scale
    assert rec.order == 2 and len(rec.per_epsilon) == 3


def test_mixed_derivative_symmetric():
    cache = {}
    a = extract_mixed(F, CFG, [F1, F2], EpsilonStencil(), SPACE, TIME, _cache=cache)
    b = extract_mixed(F, CFG, [F2, F1], EpsilonStencil(), SPACE, TIME, _cache=cache)
    assert np.allclose(a.u0, b.u0, atol=1e-12) and np.allclose(a.mT, b.mT, atol=1e-12)


def test_direction_checks():
    with pytest.raises(ValueError, match="zero mean"):
        extract_order1(F, CFG, F1 + 1.0, EpsilonStencil(), SPACE, TIME)
    with pytest.raises(ValueError, match="small-data"):
        extract_order1(F, CFG, 10 * F1, EpsilonStencil(), SPACE, TIME)
    with pytest.raises(ValueError):
        extract_mixed(F, CFG, [], EpsilonStencil(), SPACE, TIME)
    z = extract_order2(F, CFG, F1, np.zeros(SPACE.shape), EpsilonStencil(), SPACE, TIME)
    assert not z.u0.any() and not z.mT.any()


def test_noisy_derivative_warning():
    # a loose Picard tolerance makes tiny-eps differences noise dominated
    loose = ForwardConfig(picard_tol=1e-6)
    stencil = EpsilonStencil((1e-2, 1e-4, 1e-6))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rec = extract_order1(F, loose, F1, stencil, SPACE, TIME)
    assert rec.warnings
    assert any(issubclass(w.category, NoisyDerivativeWarning) for w in caught)


def test_oracles():
    stencil_oracle = StencilOracle(F, CFG, SPACE, TIME)
    assert stencil_oracle.stencil(3).epsilons == (1e-2, 5e-3)
    assert stencil_oracle.stencil(1).epsilons == (1e-2, 5e-3, 2.5e-3)
    other = stencil_oracle.with_cost(RunningCost(1.0))
    assert other.F.c1 == 1.0 and other.space == SPACE
    with pytest.raises(NotImplementedError):
        DIRECT.linearized([F1, F1, F1])
    noisy = NoisyOracle(DIRECT, 1e-3, seed=7)
    a, b = noisy.linearized([F1]), NoisyOracle(DIRECT, 1e-3, seed=7).linearized([F1])
    assert np.array_equal(a.u0, b.u0)
    clean = DIRECT.linearized([F1])
    assert 0 < np.abs(a.u0 - clean.u0).max() < 1e-2 * np.abs(clean.u0).max()


@settings(max_examples=20)
@given(a=st.floats(-2, 2), b=st.floats(-2, 2))
def test_first_order_linear_in_direction(a, b):
    # direct first-order records are linear in the direction
    ra, rb = DIRECT.linearized([F1]), DIRECT.linearized([F2])
    r = DIRECT.linearized([a * F1 + b * F2])
    assert np.allclose(r.u0, a * ra.u0 + b * rb.u0, atol=1e-12)
    assert np.allclose(r.mT, a * ra.mT + b * rb.mT, atol=1e-12)
