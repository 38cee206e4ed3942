"""Closed-form probing modes of the constant-coefficient linearised systems.

On an eigenmode with eigenvalue ``beta > 0`` put ``lambda = sqrt(beta**2 +
c*beta)`` and ``k = beta - lambda``.  Then

* decay:   ``m = e^{-lambda t} mbar``, ``u = (c + k)/lambda e^{-lambda t} mbar``
* growth:  ``m = e^{lambda t} mbar``,  ``u = c/(beta - lambda) e^{lambda t} mbar``

solve ``-u_t - Delta u = c m``, ``m_t - Delta m - Delta u = 0``.  A combined
probe superposes the two with ``m = alpha e^{-lambda t} + gamma e^{lambda t}``
(times ``mbar``) and fixes the ratio by ``u(T) = 0``.  Backward probes are the
same objects under ``t -> T - t`` and solve the adjoint system.

Each probe stores the two branch weights for ``m`` and for ``u`` separately,
so a certificate can detect a record whose ``u`` and ``m`` disagree.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Literal

import numpy as np
from numpy.typing import NDArray

from .linearized import modal_rate
from .spectral_domain import (
    SpaceGrid,
    SpaceTimeField,
    SpectralBasis,
    TimeGrid,
    neumann_laplacian_apply,
)

__all__ = [
    "Family",
    "ProbingMode",
    "ProbeCertificate",
    "probe_constants",
    "make_forward_probe",
    "make_backward_probe",
    "certify_probe",
]

Family = Literal[
    "forward_combined", "forward_decay", "forward_growth", "backward_combined", "backward_decay"
]


def probe_constants(beta: float, c: float) -> tuple[float, float, float]:
    """``(lambda, k, D)`` with ``D = c / (k (c + k))`` as used for the combined probe."""
    lam = modal_rate(beta, c)
    # beta - lambda without cancellation (beta**2 - lambda**2 = -c beta)
    k = -c * beta / (beta + lam) if beta + lam > 0.0 else 0.0
    D = c / (k * (c + k)) if k * (c + k) != 0.0 else float("nan")
    return lam, k, D


@dataclass(frozen=True)
class ProbingMode:
    """One closed-form probe.

    Branches are written in the *local* time ``tau`` (``tau = t`` for forward
    probes, ``tau = T - t`` for backward ones)::

        m-part = alpha e^{-lambda tau} + gamma_hat e^{-lambda (T - tau)}
        u-part = u_alpha e^{-lambda tau} + u_gamma_hat e^{-lambda (T - tau)}

    ``gamma_hat = gamma e^{lambda T}`` keeps large ``lambda T`` finite.
    """

    index: int
    c: float
    beta: float
    lam: float
    k: float
    D: float
    family: str
    alpha: float
    gamma_hat: float
    u_alpha: float
    u_gamma_hat: float
    horizon: float

    @property
    def gamma(self) -> float:
        """Weight of ``e^{+lambda tau}`` in the m-part."""
        with np.errstate(over="ignore", under="ignore"):
            return float(self.gamma_hat * np.exp(-self.lam * self.horizon))

    @property
    def backward(self) -> bool:
        return self.family.startswith("backward")

    def _local(self, t: NDArray) -> NDArray:
        return self.horizon - t if self.backward else t

    def profiles(self, t: NDArray[np.float64]) -> dict[str, NDArray[np.float64]]:
        """Time coefficients and their exact derivatives in physical time."""
        tau = self._local(np.asarray(t, dtype=float))
        dec = np.exp(-self.lam * tau)
        gro = np.exp(-self.lam * (self.horizon - tau))
        sign = -1.0 if self.backward else 1.0  # d tau / dt
        return {
            "u": self.u_alpha * dec + self.u_gamma_hat * gro,
            "m": self.alpha * dec + self.gamma_hat * gro,
            "u_t": sign * self.lam * (-self.u_alpha * dec + self.u_gamma_hat * gro),
            "m_t": sign * self.lam * (-self.alpha * dec + self.gamma_hat * gro),
        }

    def fields(
        self, space: SpaceGrid, time: TimeGrid, mode_function: NDArray[np.float64]
    ) -> tuple[SpaceTimeField, SpaceTimeField]:
        p = self.profiles(time.nodes)
        u = np.multiply.outer(p["u"], mode_function)
        m = np.multiply.outer(p["m"], mode_function)
        return SpaceTimeField(u, space, time), SpaceTimeField(m, space, time)


def _build(
    i: int, c: float, family: str, basis: SpectralBasis, horizon: float, coefficients: str
) -> ProbingMode:
    if i < 1:
        raise ValueError("probes need a non-constant mode (i >= 1)")
    if i >= len(basis):
        raise ValueError(f"mode {i} is not in the {len(basis)}-mode basis")
    if not c > 0.0:
        raise ValueError("probes are built for a positive first coefficient")
    beta = float(basis.eigenvalues[i])
    lam, k, D = probe_constants(beta, c)
    assert beta != lam, "beta == lambda cannot happen for c > 0"
    u_dec = (c + k) / lam  # u/m ratio on e^{-lambda tau}
    u_gro = c / k  # u/m ratio on e^{+lambda tau}
    T = horizon
    kind = family.split("_", 1)[1]
    if kind == "decay":
        if family == "backward_decay":
            # rho = e^{-lambda t} is the growing branch in tau = T - t
            alpha, gamma_hat = 0.0, 1.0
        else:
            alpha, gamma_hat = 1.0, 0.0
    elif kind == "growth":
        alpha, gamma_hat = 0.0, float(np.exp(lam * T))
    elif kind == "combined":
        alpha = -lam
        if coefficients == "literal":
            gamma_hat = D * float(np.exp(lam * T))
        elif coefficients == "rederived":
            # u(T) = 0: alpha*u_dec*e^{-lambda T} + gamma_hat*u_gro = 0
            gamma_hat = -alpha * u_dec * np.exp(-lam * T) / u_gro
        else:
            raise ValueError(f"unknown coefficient choice {coefficients!r}")
    else:
        raise ValueError(f"unknown probe family {family!r}")
    return ProbingMode(i, c, beta, lam, k, D, family, alpha, float(gamma_hat),
                       alpha * u_dec, float(gamma_hat) * u_gro, T)


def make_forward_probe(
    i: int,
    c: float,
    family: str,
    space: SpaceGrid,
    time: TimeGrid,
    basis: SpectralBasis,
    coefficients: Literal["rederived", "literal"] = "rederived",
) -> tuple[ProbingMode, SpaceTimeField, SpaceTimeField]:
    """Forward probe ``(record, u, m)``.

    ``coefficients="literal"`` uses ``gamma = D`` for the combined family
    instead of the pair that enforces ``u(T) = 0``; the certificate then shows
    whether the terminal row holds.
    """
    if not family.startswith("forward"):
        raise ValueError(f"{family!r} is not a forward family")
    probe = _build(i, c, family, basis, time.horizon, coefficients)
    u, m = probe.fields(space, time, basis.functions[i])
    return probe, u, m


def make_backward_probe(
    i: int,
    c: float,
    family: str,
    space: SpaceGrid,
    time: TimeGrid,
    basis: SpectralBasis,
    coefficients: Literal["rederived", "literal"] = "rederived",
) -> tuple[ProbingMode, SpaceTimeField, SpaceTimeField]:
    """Backward probe ``(record, v, rho)`` for ``v_t - Delta v = c rho``,
    ``-rho_t - Delta rho - Delta v = 0``."""
    if not family.startswith("backward"):
        raise ValueError(f"{family!r} is not a backward family")
    probe = _build(i, c, family, basis, time.horizon, coefficients)
    v, rho = probe.fields(space, time, basis.functions[i])
    return probe, v, rho


@dataclass(frozen=True)
class ProbeCertificate:
    modal_residual: float
    grid_residual: float
    boundary_residual: float
    terminal_residual: float | None
    degenerate: bool
    modal_tol: float = 1e-10
    terminal_tol: float = 1e-12

    @property
    def passed(self) -> bool:
        if self.degenerate:
            return False
        ok = self.modal_residual <= self.modal_tol
        if self.terminal_residual is not None:
            ok = ok and self.terminal_residual <= self.terminal_tol
        return ok


def _one_sided_normal(space: SpaceGrid, f: NDArray) -> float:
    h = space.spacing
    left = (-3.0 * f[..., 0] + 4.0 * f[..., 1] - f[..., 2]) / (2.0 * h)
    right = (3.0 * f[..., -1] - 4.0 * f[..., -2] + f[..., -3]) / (2.0 * h)
    return float(max(np.abs(left).max(), np.abs(right).max()))


def certify_probe(
    probe: ProbingMode,
    u: SpaceTimeField,
    m: SpaceTimeField,
    c: float,
    space: SpaceGrid,
    time: TimeGrid,
    basis: SpectralBasis,
) -> ProbeCertificate:
    """Sup-norm residuals of a probe per unit amplitude, split by error source.

    * ``modal_residual``: both equations on the mode, exact in time, using
      the record's own eigenvalue (round-off only when correct);
    * ``grid_residual``: both equations with the grid Laplacian applied to
      the sampled fields and exact time derivatives (shows ``O(h**2)`` when
      the eigenvalue is the continuous one);
    * ``boundary_residual``: one-sided second-order normal derivatives;
    * ``terminal_residual``: ``|u(T)|`` (forward) or ``|v(0)|`` (backward)
      for combined probes, ``None`` otherwise.
    """
    b, lam = probe.beta, probe.lam
    # local-time rows are the forward rows for every family
    dec_rows = (lam * probe.u_alpha + b * probe.u_alpha - c * probe.alpha,
                -lam * probe.alpha + b * probe.alpha + b * probe.u_alpha)
    gro_rows = (-lam * probe.u_gamma_hat + b * probe.u_gamma_hat - c * probe.gamma_hat,
                lam * probe.gamma_hat + b * probe.gamma_hat + b * probe.u_gamma_hat)
    # sup over tau of e^{-lambda tau} and e^{-lambda (T - tau)} is 1
    modal = max(abs(dec_rows[0]) + abs(gro_rows[0]), abs(dec_rows[1]) + abs(gro_rows[1]))
    amp = max(abs(probe.alpha) + abs(probe.gamma_hat),
              abs(probe.u_alpha) + abs(probe.u_gamma_hat))
    scale = 1.0 / amp if amp > 0 else 1.0

    p = probe.profiles(time.nodes)
    phi = basis.functions[probe.index]
    u_t = np.multiply.outer(p["u_t"], phi)
    m_t = np.multiply.outer(p["m_t"], phi)
    lap_u = neumann_laplacian_apply(space, u.values)
    lap_m = neumann_laplacian_apply(space, m.values)
    if probe.backward:
        r1 = u_t - lap_u - c * m.values
        r2 = -m_t - lap_m - lap_u
    else:
        r1 = -u_t - lap_u - c * m.values
        r2 = m_t - lap_m - lap_u
    grid = float(max(np.abs(r1).max(), np.abs(r2).max()))
    bnd = max(_one_sided_normal(space, u.values), _one_sided_normal(space, m.values))
    terminal = None
    if probe.family == "forward_combined":
        terminal = float(np.abs(u.values[-1]).max()) * scale
    elif probe.family == "backward_combined":
        terminal = float(np.abs(u.values[0]).max()) * scale
    degenerate = not (np.any(u.values) or np.any(m.values))
    return ProbeCertificate(float(modal * scale), grid * scale, bnd * scale, terminal,
                            degenerate)


def corrupt(probe: ProbingMode, factor: float = 1.01) -> ProbingMode:
    """Copy with the m-part growth weight scaled but the u-part left alone."""
    return replace(probe, gamma_hat=probe.gamma_hat * factor)
