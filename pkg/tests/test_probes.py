import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mfg_inverse.probes import (
    certify_probe,
    corrupt,
    make_backward_probe,
    make_forward_probe,
    probe_constants,
)
from mfg_inverse.spectral_domain import SpaceGrid, TimeGrid, build_interval_basis

FAMILIES = ["forward_combined", "forward_decay", "forward_growth",
            "backward_combined", "backward_decay"]


def _make(i, c, family, space, time, basis, **kw):
    maker = make_backward_probe if family.startswith("backward") else make_forward_probe
    return maker(i, c, family, space, time, basis, **kw)


def test_constants_fixture():
    lam, k, D = probe_constants(1.0, 3.0)
    assert (lam, k, D) == (2.0, -1.0, -1.5)


def test_constants_first_mode():
    lam, k, _ = probe_constants(np.pi**2, 1.0)
    assert lam == pytest.approx(10.357542924607737094, rel=1e-15)
    assert k == pytest.approx(np.pi**2 - 10.357542924607737094, rel=1e-12)


@given(beta=st.floats(1e-3, 1e4), c=st.floats(1e-3, 1e2))
def test_constant_invariants(beta, c):
    lam, k, D = probe_constants(beta, c)
    assert lam >= beta
    assert k <= 0
    assert c + k >= 0
    assert D <= 0
    # k is the stable form of beta - lambda
    assert k == pytest.approx(beta - lam, rel=1e-9, abs=1e-9 * lam)


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("c", [0.5, 1.0, 2.0, 5.0])
@pytest.mark.parametrize("i", [1, 4, 8])
def test_probes_certify(family, c, i, space, time, analytic_basis):
    probe, u, m = _make(i, c, family, space, time, analytic_basis)
    cert = certify_probe(probe, u, m, c, space, time, analytic_basis)
    assert cert.passed, cert
    assert cert.modal_residual <= 1e-10
    if family.endswith("combined"):
        assert cert.terminal_residual <= 1e-12
    else:
        assert cert.terminal_residual is None


def test_forward_combined_data(space, time, analytic_basis):
    probe, u, m = make_forward_probe(1, 2.0, "forward_combined", space, time, analytic_basis)
    assert np.abs(u.final).max() < 1e-14
    assert probe.alpha == -probe.lam


def test_backward_decay_profile(space, time, analytic_basis):
    probe, v, rho = make_backward_probe(2, 1.0, "backward_decay", space, time, analytic_basis)
    expected = np.exp(-probe.lam * time.nodes)
    assert np.allclose(rho.values[:, 0] / analytic_basis.functions[2][0], expected, rtol=1e-13)


def test_grid_residual_second_order():
    errs = []
    for n in (65, 129, 257):
        space, time = SpaceGrid(n), TimeGrid(0.25, 10)
        basis = build_interval_basis(space, 4)
        probe, u, m = make_forward_probe(2, 1.0, "forward_decay", space, time, basis)
        errs.append(certify_probe(probe, u, m, 1.0, space, time, basis).grid_residual)
    slopes = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(np.abs(slopes - 2) < 0.2)


def test_literal_coefficients_miss_terminal_row(space, time, analytic_basis):
    probe, u, m = make_forward_probe(1, 2.0, "forward_combined", space, time, analytic_basis,
                                     coefficients="literal")
    cert = certify_probe(probe, u, m, 2.0, space, time, analytic_basis)
    assert cert.modal_residual <= 1e-10
    assert cert.terminal_residual > 1e-3
    assert not cert.passed


def test_corrupted_probe_fails(space, time, analytic_basis):
    probe, _, _ = make_forward_probe(1, 2.0, "forward_combined", space, time, analytic_basis)
    bad = corrupt(probe, 1.01)
    u, m = bad.fields(space, time, analytic_basis.functions[1])
    cert = certify_probe(bad, u, m, 2.0, space, time, analytic_basis)
    assert cert.modal_residual > 1e-4 and not cert.passed


def test_invalid_requests(space, time, analytic_basis):
    with pytest.raises(ValueError):
        make_forward_probe(0, 1.0, "forward_decay", space, time, analytic_basis)
    with pytest.raises(ValueError):
        make_forward_probe(9, 1.0, "forward_decay", space, time, analytic_basis)
    with pytest.raises(ValueError):
        make_forward_probe(1, -1.0, "forward_decay", space, time, analytic_basis)
    with pytest.raises(ValueError):
        make_forward_probe(1, 1.0, "backward_decay", space, time, analytic_basis)
    with pytest.raises(ValueError):
        make_backward_probe(1, 1.0, "forward_decay", space, time, analytic_basis)
    with pytest.raises(ValueError):
        make_forward_probe(1, 1.0, "forward_spiral", space, time, analytic_basis)
