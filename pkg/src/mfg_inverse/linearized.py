"""Linearised MFG systems about the uniform state, solved mode by mode.

Forward system (first and higher orders share the operator)::

    -u_t - Delta u = c m + S_u        u(T) = u_T
     m_t - Delta m - Delta u = S_m    m(0) = m_0

Adjoint (backward) system::

     v_t - Delta v = c rho + S_v      v(0) = v_0
    -rho_t - Delta rho - Delta v = S_rho   rho(T) = rho_T

On a Neumann eigenmode with eigenvalue ``beta`` the forward system reads
``y' = A y + b`` with ``y = (nu, mu)``, ``A = [[beta, -c], [-beta, -beta]]``
and ``b = (-s_u, s_m)``; the eigenvalues of ``A`` are ``+-lambda`` with
``lambda = sqrt(beta**2 + c*beta)``.  The adjoint system is the forward one
under ``t -> T - t``.

Two time treatments are offered.  ``"exact"`` uses the exponential branches
in closed form (sources by variation of constants with the trapezoid rule).
``"crank_nicolson"`` solves the per-mode two-point problem of the
Crank-Nicolson scheme directly, which together with the discrete eigenvalues
of :func:`full_grid_basis` is the exact linearisation of
:func:`mfg_inverse.forward_solver.solve_mfg`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Literal

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import solve_banded

from .spectral_domain import (
    SpaceGrid,
    SpaceTimeField,
    SpectralBasis,
    TimeGrid,
    flux_divergence,
    nodal_gradient,
    quadrature,
)

__all__ = [
    "TimeScheme",
    "ModalState",
    "LinearPair",
    "BasisTruncationError",
    "modal_rate",
    "solve_modal",
    "solve_linear_system",
    "solve_first_order",
    "second_order_sources",
    "solve_second_order",
    "solve_adjoint",
]

TimeScheme = Literal["exact", "crank_nicolson"]


class BasisTruncationError(ValueError):
    """Input data is not represented by the supplied basis."""


@dataclass(frozen=True)
class ModalState:
    """Time coefficients of one mode: ``u = nu(t) mbar_i``, ``m = mu(t) mbar_i``."""

    index: int
    nu: NDArray[np.float64]
    mu: NDArray[np.float64]


@dataclass(frozen=True)
class LinearPair:
    """Solution of a linearised system on the grid plus its modal coefficients.

    Unpacks as ``u, m = pair``.
    """

    u: SpaceTimeField
    m: SpaceTimeField
    nu: NDArray[np.float64]  # (time, mode)
    mu: NDArray[np.float64]

    def __iter__(self) -> Iterator[SpaceTimeField]:
        return iter((self.u, self.m))

    def modal_state(self, i: int) -> ModalState:
        return ModalState(i, self.nu[:, i], self.mu[:, i])


def modal_rate(beta: float, c: float) -> float:
    """``lambda = sqrt(beta**2 + c*beta)``."""
    return float(np.sqrt(beta * beta + c * beta))


def _eigvectors(beta: float, lam: float) -> tuple[NDArray, NDArray]:
    # from the second row of A -/+ lam I; valid also when c = 0
    v_minus = np.array([lam - beta, beta])
    v_plus = np.array([beta + lam, -beta])
    return v_minus / np.linalg.norm(v_minus), v_plus / np.linalg.norm(v_plus)


def _exact_modal(
    beta: float, c: float, mu0: float, nu_T: float, b: NDArray, times: NDArray
) -> tuple[NDArray, NDArray]:
    T = times[-1]
    dt = np.diff(times)
    if beta == 0.0:
        # defective block: mu' = b_m, nu' = -c mu + b_u
        mu = mu0 + _cumtrapz(b[:, 1], dt)
        rate = -c * mu + b[:, 0]
        nu = nu_T - (_cumtrapz(rate, dt)[-1] - _cumtrapz(rate, dt))
        return nu, mu
    lam = modal_rate(beta, c)
    vm, vp = _eigvectors(beta, lam)
    V = np.column_stack([vm, vp])
    p, q = np.linalg.solve(V, b.T)
    # decaying coordinate forward from 0, growing coordinate backward from T
    zm = np.zeros_like(times)
    zp = np.zeros_like(times)
    for n in range(len(times) - 1):
        e = np.exp(-lam * dt[n])
        zm[n + 1] = e * zm[n] + 0.5 * dt[n] * (e * p[n] + p[n + 1])
    for n in range(len(times) - 1, 0, -1):
        e = np.exp(-lam * dt[n - 1])
        zp[n - 1] = e * zp[n] - 0.5 * dt[n - 1] * (q[n - 1] + e * q[n])
    part = np.outer(zm, vm) + np.outer(zp, vp)
    decay = np.exp(-lam * times)
    grow = np.exp(-lam * (T - times))
    # homogeneous correction: a vm e^{-lam t} + g vp e^{-lam (T-t)}
    M = np.array([[vm[1], vp[1] * np.exp(-lam * T)], [vm[0] * np.exp(-lam * T), vp[0]]])
    rhs = np.array([mu0 - part[0, 1], nu_T - part[-1, 0]])
    a, g = np.linalg.solve(M, rhs)
    y = part + np.outer(a * decay, vm) + np.outer(g * grow, vp)
    return y[:, 0], y[:, 1]


def _cumtrapz(f: NDArray, dt: NDArray) -> NDArray:
    out = np.zeros_like(f)
    out[1:] = np.cumsum(0.5 * dt * (f[1:] + f[:-1]))
    return out


def _cn_modal(
    beta: float, c: float, mu0: float, nu_T: float, b: NDArray, dt: float
) -> tuple[NDArray, NDArray]:
    # unknowns ordered [nu_0, mu_0, nu_1, mu_1, ...]; banded (2, 2)
    steps = b.shape[0] - 1
    size = 2 * (steps + 1)
    A = np.array([[beta, -c], [-beta, -beta]])
    left = np.eye(2) - 0.5 * dt * A  # multiplies y^{n+1}
    right = -(np.eye(2) + 0.5 * dt * A)  # multiplies y^n
    ab = np.zeros((5, size))
    rhs = np.zeros(size)

    def put(row: int, col: int, val: float) -> None:
        ab[2 + row - col, col] = val

    put(0, 1, 1.0)
    rhs[0] = mu0
    for n in range(steps):
        for k in range(2):
            row = 2 * n + 1 + k
            for j in range(2):
                put(row, 2 * n + j, right[k, j])
                put(row, 2 * n + 2 + j, left[k, j])
            rhs[row] = 0.5 * dt * (b[n, k] + b[n + 1, k])
    put(size - 1, size - 2, 1.0)
    rhs[-1] = nu_T
    y = solve_banded((2, 2), ab, rhs).reshape(steps + 1, 2)
    return y[:, 0], y[:, 1]


def solve_modal(
    beta: float,
    c: float,
    time: TimeGrid,
    mu0: float = 0.0,
    nu_T: float = 0.0,
    source_u: NDArray | None = None,
    source_m: NDArray | None = None,
    scheme: TimeScheme = "exact",
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Solve one mode of the forward system; returns ``(nu(t), mu(t))``."""
    n = time.steps + 1
    b = np.zeros((n, 2))
    if source_u is not None:
        b[:, 0] = -np.asarray(source_u)
    if source_m is not None:
        b[:, 1] = np.asarray(source_m)
    if scheme == "exact":
        return _exact_modal(beta, c, mu0, nu_T, b, time.nodes)
    if scheme == "crank_nicolson":
        return _cn_modal(beta, c, mu0, nu_T, b, time.dt)
    raise ValueError(f"unknown time scheme {scheme!r}")


def _check_grids(basis: SpectralBasis, space: SpaceGrid) -> None:
    if basis.grid != space:
        raise ValueError("basis and space grid do not match")


def _project_checked(basis: SpectralBasis, f: NDArray, tol: float, what: str) -> NDArray:
    coeffs = basis.project(f)
    resid = np.max(np.abs(basis.synthesize(coeffs) - f)) if np.size(f) else 0.0
    if resid > tol:
        raise BasisTruncationError(
            f"{what} is not represented by the {len(basis)}-mode basis (residual {resid:.2e})"
        )
    return coeffs


def solve_linear_system(
    c: float,
    space: SpaceGrid,
    time: TimeGrid,
    basis: SpectralBasis,
    m_initial: NDArray | None = None,
    u_terminal: NDArray | None = None,
    source_u: NDArray | None = None,
    source_m: NDArray | None = None,
    scheme: TimeScheme = "exact",
    truncation_tol: float = 1e-8,
) -> LinearPair:
    """Forward linear system with arbitrary data and space-time sources."""
    _check_grids(basis, space)
    K = len(basis)
    nt = time.steps + 1
    zeros = np.zeros(space.shape)
    mu0 = _project_checked(basis, zeros if m_initial is None else m_initial, truncation_tol,
                           "initial datum")
    nuT = _project_checked(basis, zeros if u_terminal is None else u_terminal, truncation_tol,
                           "terminal datum")
    su = np.zeros((nt, K)) if source_u is None else _project_checked(
        basis, np.asarray(source_u), truncation_tol, "u-source")
    sm = np.zeros((nt, K)) if source_m is None else _project_checked(
        basis, np.asarray(source_m), truncation_tol, "m-source")
    nu = np.zeros((nt, K))
    mu = np.zeros((nt, K))
    for i in range(K):
        if mu0[i] == 0.0 and nuT[i] == 0.0 and not su[:, i].any() and not sm[:, i].any():
            continue
        nu[:, i], mu[:, i] = solve_modal(
            float(basis.eigenvalues[i]), c, time, mu0[i], nuT[i], su[:, i], sm[:, i], scheme
        )
    u = SpaceTimeField(basis.synthesize(nu), space, time)
    m = SpaceTimeField(basis.synthesize(mu), space, time)
    return LinearPair(u, m, nu, mu)


def solve_first_order(
    c: float,
    f1: NDArray[np.float64],
    space: SpaceGrid,
    time: TimeGrid,
    basis: SpectralBasis,
    scheme: TimeScheme = "exact",
    mean_tol: float = 1e-10,
) -> LinearPair:
    """First-order linearisation: zero terminal ``u``, ``m(0) = f1``."""
    f1 = np.asarray(f1, dtype=float)
    mean = quadrature(space, f1)
    if abs(mean) > mean_tol:
        raise ValueError(f"perturbation must have zero mean, got {mean:.3e}")
    return solve_linear_system(c, space, time, basis, m_initial=f1, scheme=scheme)


def second_order_sources(
    F2: NDArray[np.float64] | float,
    first_a: LinearPair,
    first_b: LinearPair,
    space: SpaceGrid,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Right-hand sides ``(S_u, S_m)`` of the second-order system.

    ``S_u = F2 m1 m2 - grad u1 . grad u2`` and
    ``S_m = div(m1 grad u2) + div(m2 grad u1)``, with the same discrete
    gradient and flux divergence as the forward solver.
    """
    u1, m1 = first_a.u.values, first_a.m.values
    u2, m2 = first_b.u.values, first_b.m.values
    s_u = np.asarray(F2) * m1 * m2 - nodal_gradient(space, u1) * nodal_gradient(space, u2)
    s_m = flux_divergence(space, m1, u2) + flux_divergence(space, m2, u1)
    return s_u, s_m


def solve_second_order(
    c: float,
    F2: NDArray[np.float64] | float,
    first_a: LinearPair,
    first_b: LinearPair,
    space: SpaceGrid,
    time: TimeGrid,
    basis: SpectralBasis,
    scheme: TimeScheme = "exact",
) -> LinearPair:
    """Second-order linearisation with zero data and bilinear sources."""
    for pair in (first_a, first_b):
        if pair.u.space != space or pair.u.time != time:
            raise ValueError("first-order pairs live on different grids")
    s_u, s_m = second_order_sources(F2, first_a, first_b, space)
    return solve_linear_system(c, space, time, basis, source_u=s_u, source_m=s_m,
                               scheme=scheme)


def solve_adjoint(
    c: float,
    rho_terminal: NDArray[np.float64],
    space: SpaceGrid,
    time: TimeGrid,
    basis: SpectralBasis,
    scheme: TimeScheme = "exact",
    v_initial: NDArray | None = None,
    source_v: NDArray | None = None,
    source_rho: NDArray | None = None,
) -> LinearPair:
    """Backward system; ``rho(T)`` is the supplied data, ``v(0)`` defaults to 0.

    The returned pair holds ``(v, rho)`` in its ``(u, m)`` slots.
    """
    flip = slice(None, None, -1)
    pair = solve_linear_system(
        c, space, time, basis,
        m_initial=rho_terminal,
        u_terminal=v_initial,
        source_u=None if source_v is None else np.asarray(source_v)[flip],
        source_m=None if source_rho is None else np.asarray(source_rho)[flip],
        scheme=scheme,
    )
    return LinearPair(
        SpaceTimeField(pair.u.values[flip].copy(), space, time),
        SpaceTimeField(pair.m.values[flip].copy(), space, time),
        pair.nu[flip].copy(),
        pair.mu[flip].copy(),
    )
