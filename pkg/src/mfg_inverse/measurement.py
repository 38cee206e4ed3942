"""Measurement map ``m0 -> (u(., 0), m(., T))`` and its derivatives at ``m0 = 1``.

Derivatives are taken by central epsilon-stencils around the uniform state::

    order k:  sum_{s in {+-1}^k} (prod s) N(1 + sum_l s_l eps f_l) / (2 eps)^k

which is the mixed derivative ``d^k N / d eps_1 ... d eps_k`` up to
``O(eps**2)``.  With several step sizes one Richardson level removes the
``eps**2`` term.
"""

from __future__ import annotations

import hashlib
import itertools
import logging
import warnings
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np
from numpy.typing import NDArray

from .forward_solver import ForwardConfig, solve_mfg
from .linearized import (
    TimeScheme,
    solve_first_order,
    solve_second_order,
)
from .running_cost import RunningCost
from .spectral_domain import SpaceGrid, SpectralBasis, TimeGrid, quadrature

__all__ = [
    "MeasurementRecord",
    "EpsilonStencil",
    "LinearizedRecord",
    "NoisyDerivativeWarning",
    "MeasurementOracle",
    "StencilOracle",
    "DirectOracle",
    "NoisyOracle",
    "measure",
    "extract_mixed",
    "extract_order1",
    "extract_order2",
    "richardson",
    "record_csv",
]

logger = logging.getLogger(__name__)


class NoisyDerivativeWarning(UserWarning):
    """The Richardson table does not show the expected ``eps**2`` behaviour."""


@dataclass(frozen=True)
class MeasurementRecord:
    u0: NDArray[np.float64]
    mT: NDArray[np.float64]
    provenance: dict = field(default_factory=dict, compare=False)

    def mass(self, space: SpaceGrid) -> float:
        return float(quadrature(space, self.mT))


@dataclass(frozen=True)
class EpsilonStencil:
    epsilons: tuple[float, ...] = (1e-2, 5e-3, 2.5e-3)
    scheme: str = "central"
    order: int = 1

    def __post_init__(self) -> None:
        eps = tuple(float(e) for e in self.epsilons)
        object.__setattr__(self, "epsilons", eps)
        if not eps or any(e <= 0.0 for e in eps):
            raise ValueError("epsilons must be positive")
        if list(eps) != sorted(eps, reverse=True):
            raise ValueError("epsilons must be listed in decreasing order")
        if self.scheme not in ("central", "one-sided"):
            raise ValueError(f"unknown stencil scheme {self.scheme!r}")
        if self.order < 1:
            raise ValueError("stencil order must be >= 1")

    @property
    def nominal_order(self) -> int:
        """Truncation order in eps of a single stencil evaluation."""
        return 2 if self.scheme == "central" else 1


@dataclass
class LinearizedRecord:
    """Order-k derivative of the measurement: ``(u^(k)(., 0), m^(k)(., T))``."""

    u0: NDArray[np.float64]
    mT: NDArray[np.float64]
    order: int
    per_epsilon: list[tuple[float, NDArray, NDArray]] = field(default_factory=list)
    richardson_ratio: float | None = None
    warnings: list[str] = field(default_factory=list)

    def __iter__(self):
        return iter((self.u0, self.mT))

    def m_mean(self, space: SpaceGrid) -> float:
        return float(quadrature(space, self.mT))


def _provenance(F: RunningCost, m0: NDArray, space: SpaceGrid, time: TimeGrid) -> dict:
    h = hashlib.sha256()
    h.update(np.float64(F.c1).tobytes())
    for coeff in F.higher:
        h.update(np.ascontiguousarray(coeff, dtype=float).tobytes())
    return {
        "cost_hash": h.hexdigest()[:16],
        "m0_hash": hashlib.sha256(np.ascontiguousarray(m0).tobytes()).hexdigest()[:16],
        "N": space.points_per_axis,
        "T": time.horizon,
        "M": time.steps,
    }


def measure(
    F: RunningCost,
    cfg: ForwardConfig,
    m0: NDArray[np.float64],
    space: SpaceGrid,
    time: TimeGrid,
    noise_level: float = 0.0,
    rng: np.random.Generator | None = None,
) -> MeasurementRecord:
    """Solve the MFG system and keep ``u(., 0)`` and ``m(., T)``.

    ``noise_level > 0`` adds Gaussian noise with standard deviation
    ``noise_level * sup|component|`` to each slice.
    """
    sol = solve_mfg(F, cfg, m0, space, time)
    u0 = sol.u.initial.copy()
    mT = sol.m.final.copy()
    prov = _provenance(F, np.asarray(m0, dtype=float), space, time)
    if noise_level > 0.0:
        rng = rng if rng is not None else np.random.default_rng(0)
        u0 = _perturb(u0, noise_level, rng)
        mT = _perturb(mT, noise_level, rng)
        prov["noise_level"] = noise_level
    return MeasurementRecord(u0, mT, prov)


def _perturb(x: NDArray, level: float, rng: np.random.Generator) -> NDArray:
    scale = level * float(np.abs(x).max())
    return x + scale * rng.standard_normal(x.shape)


def richardson(
    values: Sequence[NDArray], epsilons: Sequence[float], power: int = 2
) -> tuple[NDArray, float | None]:
    """One Richardson level on the two finest step sizes.

    Returns the extrapolated value and, with three or more steps, the
    convergence ratio ``|D1 - D2| / |D2 - D3|`` over the three finest
    (about ``(eps1/eps2)**power``).
    """
    if len(values) == 1:
        return values[0], None
    r = (epsilons[-2] / epsilons[-1]) ** power
    extrap = (r * values[-1] - values[-2]) / (r - 1.0)
    ratio = None
    if len(values) >= 3:
        d1 = float(np.abs(values[-3] - values[-2]).max())
        d2 = float(np.abs(values[-2] - values[-1]).max())
        ratio = d1 / d2 if d2 > 0.0 else float("inf")
    return extrap, ratio


def extract_mixed(
    F: RunningCost,
    cfg: ForwardConfig,
    directions: Sequence[NDArray[np.float64]],
    stencil: EpsilonStencil,
    space: SpaceGrid,
    time: TimeGrid,
    mean_tol: float = 1e-10,
    _cache: dict | None = None,
) -> LinearizedRecord:
    """Mixed derivative of the measurement along ``directions`` at ``m0 = 1``."""
    k = len(directions)
    if k < 1:
        raise ValueError("need at least one direction")
    dirs = [np.asarray(f, dtype=float) for f in directions]
    for f in dirs:
        if f.shape != space.shape:
            raise ValueError("direction does not match the grid")
        if abs(quadrature(space, f)) > mean_tol:
            raise ValueError("perturbation directions must have zero mean")
    bound = sum(float(np.abs(f).max()) for f in dirs) * stencil.epsilons[0]
    if bound > cfg.perturbation_bound + 1e-15:
        raise ValueError(
            f"largest stencil point leaves the small-data ball ({bound:.3g} > "
            f"{cfg.perturbation_bound:.3g}); reduce epsilon"
        )
    if not all(np.any(f) for f in dirs):
        # a mixed derivative along a zero direction vanishes identically
        z = np.zeros(space.shape)
        return LinearizedRecord(z, z.copy(), k)

    base = np.ones(space.shape)
    cache = {} if _cache is None else _cache

    def record(m0: NDArray) -> tuple[NDArray, NDArray]:
        key = m0.tobytes()
        if key not in cache:
            sol = solve_mfg(F, cfg, m0, space, time)
            cache[key] = (sol.u.initial.copy(), sol.m.final.copy())
        return cache[key]

    per_eps = []
    for eps in stencil.epsilons:
        du = np.zeros(space.shape)
        dm = np.zeros(space.shape)
        if stencil.scheme == "central":
            signs_iter = itertools.product((1.0, -1.0), repeat=k)
            denom = (2.0 * eps) ** k
            for signs in signs_iter:
                m0 = base + sum(s * eps * f for s, f in zip(signs, dirs))
                u0, mT = record(m0)
                w = float(np.prod(signs))
                du += w * u0
                dm += w * mT
        else:
            denom = eps ** k
            for signs in itertools.product((1.0, 0.0), repeat=k):
                m0 = base + sum(s * eps * f for s, f in zip(signs, dirs))
                u0, mT = record(m0)
                w = (-1.0) ** (k - int(sum(signs)))
                du += w * u0
                dm += w * mT
        per_eps.append((eps, du / denom, dm / denom))

    p = stencil.nominal_order
    eps_list = [e for e, _, _ in per_eps]
    u_ex, _ = richardson([d for _, d, _ in per_eps], eps_list, p)
    m_ex, _ = richardson([d for _, _, d in per_eps], eps_list, p)
    _, ratio = richardson([np.concatenate([du, dm]) for _, du, dm in per_eps], eps_list, p)
    out = LinearizedRecord(u_ex, m_ex, k, per_eps, ratio)
    if ratio is not None:
        expected = (eps_list[-2] / eps_list[-1]) ** p
        # differences below the Picard noise floor carry no ratio information
        floor = 100.0 * cfg.picard_tol / eps_list[-1] ** k
        diff = max(float(np.abs(per_eps[-2][j] - per_eps[-1][j]).max()) for j in (1, 2))
        scale = max(float(np.abs(u_ex).max()), float(np.abs(m_ex).max()))
        # ... unless that floor is itself a visible fraction of the record
        resolved = diff <= floor and floor <= 1e-3 * scale
        if not resolved and not 0.5 * expected <= ratio <= 1.5 * expected:
            msg = (f"order-{k} Richardson ratio {ratio:.3g}, expected about "
                   f"{expected:.3g}: derivative may be noise dominated")
            out.warnings.append(msg)
            warnings.warn(msg, NoisyDerivativeWarning, stacklevel=2)
    mean = out.m_mean(space)
    # each solve conserves mass to round-off; the stencil divides that by eps**k
    mean_tol = max(1e-8, 1e2 * np.finfo(float).eps / eps_list[-1] ** k)
    if abs(mean) > mean_tol:
        out.warnings.append(f"extracted m-slice has mean {mean:.3e}")
        logger.warning("extracted m-slice has mean %.3e", mean)
    return out


def extract_order1(F, cfg, f1, stencil, space, time) -> LinearizedRecord:
    """``(u^(1)(., 0), m^(1)(., T))`` by central differences in ``eps``."""
    return extract_mixed(F, cfg, [f1], stencil, space, time)


def extract_order2(F, cfg, f1, f2, stencil, space, time) -> LinearizedRecord:
    """Mixed second derivative with the four-point stencil."""
    return extract_mixed(F, cfg, [f1, f2], stencil, space, time)


class MeasurementOracle(Protocol):
    """Source of linearised measurement data (the experimentalist's side)."""

    space: SpaceGrid
    time: TimeGrid

    def linearized(self, directions: Sequence[NDArray[np.float64]]) -> LinearizedRecord: ...


@dataclass
class StencilOracle:
    """Linearised data from full nonlinear solves and epsilon-stencils."""

    F: RunningCost
    cfg: ForwardConfig
    space: SpaceGrid
    time: TimeGrid
    stencils: dict[int, EpsilonStencil] = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False)

    def stencil(self, order: int) -> EpsilonStencil:
        if order in self.stencils:
            return self.stencils[order]
        if order >= 3:
            return EpsilonStencil((1e-2, 5e-3), order=order)
        return EpsilonStencil(order=order)

    def with_cost(self, F: RunningCost) -> "StencilOracle":
        """Same grids and stencils, different running cost."""
        return StencilOracle(F, self.cfg, self.space, self.time, dict(self.stencils))

    def linearized(self, directions):
        return extract_mixed(self.F, self.cfg, directions, self.stencil(len(directions)),
                             self.space, self.time, _cache=self._cache)


@dataclass
class DirectOracle:
    """Linearised data from direct solves of the first and second order systems."""

    F: RunningCost
    space: SpaceGrid
    time: TimeGrid
    basis: SpectralBasis
    scheme: TimeScheme = "crank_nicolson"

    def with_cost(self, F: RunningCost) -> "DirectOracle":
        return DirectOracle(F, self.space, self.time, self.basis, self.scheme)

    def linearized(self, directions):
        c = self.F.c1
        firsts = [solve_first_order(c, f, self.space, self.time, self.basis, self.scheme)
                  for f in directions]
        if len(firsts) == 1:
            pair = firsts[0]
        elif len(firsts) == 2:
            F2 = self.F.coefficient(2, self.space)
            pair = solve_second_order(c, F2, firsts[0], firsts[1], self.space, self.time,
                                      self.basis, self.scheme)
        else:
            raise NotImplementedError("direct oracle covers orders 1 and 2")
        return LinearizedRecord(pair.u.initial.copy(), pair.m.final.copy(), len(firsts))


@dataclass
class NoisyOracle:
    """Adds relative Gaussian noise to every record served by ``base``."""

    base: MeasurementOracle
    level: float
    seed: int = 0

    def __post_init__(self) -> None:
        self.space = self.base.space
        self.time = self.base.time
        self._rng = np.random.default_rng(self.seed)

    def linearized(self, directions):
        rec = self.base.linearized(directions)
        return LinearizedRecord(_perturb(rec.u0, self.level, self._rng),
                                _perturb(rec.mT, self.level, self._rng),
                                rec.order, rec.per_epsilon, rec.richardson_ratio,
                                list(rec.warnings))


def record_csv(record: MeasurementRecord | LinearizedRecord, space: SpaceGrid) -> str:
    """CSV text with columns ``x, u0, mT`` and a ``#`` provenance header."""
    lines = []
    prov = getattr(record, "provenance", {}) or {}
    for key in sorted(prov):
        lines.append(f"# {key}={prov[key]}")
    lines.append("x,u0,mT")
    for x, u, m in zip(space.axis, record.u0, record.mT):
        lines.append(f"{x:.12g},{u:.16e},{m:.16e}")
    return "\n".join(lines) + "\n"
