"""Constructive recovery of the running cost from linearised measurements.

Step I pins the scalar first coefficient: a single-mode perturbation
``f1 = mbar_i`` stays on mode ``i``, and its measured coefficients are
compared with the modal propagator as a function of ``c``.

Steps II and III recover ``F^(k)(x) = sum_{i<=K} a_i mbar_i`` by Galerkin
least squares.  At order ``k`` the response is affine in ``F^(k)``: a part
fixed by the lower orders plus ``sum_i a_i R_i`` where ``R_i`` solves the
linear system with source ``mbar_i * m1**k`` in the HJB row.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import brentq

from .linearized import (
    TimeScheme,
    solve_first_order,
    solve_linear_system,
    solve_modal,
    solve_second_order,
)
from .measurement import MeasurementOracle
from .running_cost import RunningCost
from .spectral_domain import SpaceGrid, SpectralBasis

__all__ = [
    "BracketError",
    "InconsistentDataError",
    "IllPosedTruncationError",
    "F1Result",
    "CoefficientResult",
    "ReconstructionReport",
    "modal_prediction",
    "recover_F1",
    "recover_F2",
    "recover_Fk",
    "recover_running_cost",
]


class BracketError(ValueError):
    """The observation has no root for ``c`` inside the bracket."""


class InconsistentDataError(ValueError):
    """The two measurement channels give different values of ``c``."""


class IllPosedTruncationError(ValueError):
    """Sensitivity matrix too ill-conditioned; add probe scenarios."""


@dataclass
class F1Result:
    c: float
    mode: int
    root_m: float | None
    root_u: float | None
    observed: tuple[float, float]  # (u-coefficient at t=0, m-coefficient at T)
    residual: float
    notes: list[str] = field(default_factory=list)


@dataclass
class CoefficientResult:
    order: int
    coefficients: NDArray[np.float64]  # a_0 .. a_K
    values: NDArray[np.float64]  # synthesised grid function
    residual: float  # relative least-squares residual
    condition: float
    residual_tol: float
    scenarios: tuple[int, ...]

    @property
    def flagged(self) -> bool:
        """Data not explained by the truncated model (truncation or wrong lower orders)."""
        return self.residual > self.residual_tol


@dataclass
class ReconstructionReport:
    c1: float
    stage1: list[F1Result]
    higher: dict[int, CoefficientResult]
    probes: list[str]
    notes: list[str] = field(default_factory=list)

    @property
    def cost(self) -> RunningCost:
        orders = sorted(self.higher)
        return RunningCost(self.c1, tuple(self.higher[k].values for k in orders))

    @property
    def ok(self) -> bool:
        return self.c1 > 0.0 and not any(r.flagged for r in self.higher.values())

    def table(self) -> str:
        lines = [f"c1 = {self.c1:.12g}"]
        for r in self.stage1:
            lines.append(f"  mode {r.mode}: c = {r.c:.12g} (m-root {r.root_m}, u-root {r.root_u})")
        for k in sorted(self.higher):
            res = self.higher[k]
            lines.append(f"F^({k}) modal coefficients (residual {res.residual:.3e}, "
                         f"cond {res.condition:.3e}{', FLAGGED' if res.flagged else ''})")
            for i, a in enumerate(res.coefficients):
                lines.append(f"  a_{i} = {a: .12e}")
        return "\n".join(lines)


def modal_prediction(
    c: float, beta: float, oracle_time, scheme: TimeScheme = "crank_nicolson"
) -> tuple[float, float]:
    """``(nu(0), mu(T))`` of the unit first-order response on one mode."""
    nu, mu = solve_modal(beta, c, oracle_time, mu0=1.0, scheme=scheme)
    return float(nu[0]), float(mu[-1])


def _root(fun: Callable[[float], float], lo: float, hi: float) -> float | None:
    flo, fhi = fun(lo), fun(hi)
    if not (np.isfinite(flo) and np.isfinite(fhi)) or flo * fhi > 0.0:
        return None
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    return float(brentq(fun, lo, hi, xtol=1e-15, rtol=4.0 * np.finfo(float).eps, maxiter=200))


def recover_F1(
    oracle: MeasurementOracle,
    i: int,
    basis: SpectralBasis,
    bracket: tuple[float, float] = (1e-3, 50.0),
    cross_tol: float | None = 1e-6,
    scheme: TimeScheme = "crank_nicolson",
    noise_floor: float = 0.0,
) -> F1Result:
    """Recover the first coefficient from the mode-``i`` first-order response.

    The density channel ``mu_i(T; c)`` is primary; the value channel
    ``nu_i(0; c)`` is used for cross-validation when ``cross_tol`` is set.
    A channel whose observed magnitude is below ``noise_floor`` is ignored.
    """
    if i < 1 or i >= len(basis):
        raise ValueError(f"probe mode {i} must be a non-constant mode of the basis")
    rec = oracle.linearized([basis.functions[i]])
    obs_u = float(basis.project(rec.u0)[i])
    obs_m = float(basis.project(rec.mT)[i])
    beta = float(basis.eigenvalues[i])
    time = oracle.time
    lo, hi = bracket

    def gap_m(c: float) -> float:
        return modal_prediction(c, beta, time, scheme)[1] - obs_m

    def gap_u(c: float) -> float:
        return modal_prediction(c, beta, time, scheme)[0] - obs_u

    root_m = _root(gap_m, lo, hi) if abs(obs_m) > noise_floor else None
    root_u = _root(gap_u, lo, hi) if abs(obs_u) > noise_floor else None
    notes = list(rec.warnings)
    if root_m is None and root_u is None:
        raise BracketError(
            f"no c in ({lo}, {hi}) reproduces the mode-{i} data; widen the bracket "
            "or check that the data come from an admissible cost"
        )
    if root_m is None:
        notes.append("density channel has no root in the bracket; using value channel")
        c = root_u
    else:
        c = root_m
    if cross_tol is not None and root_m is not None and root_u is not None:
        if abs(root_m - root_u) > cross_tol * max(abs(root_m), 1.0):
            raise InconsistentDataError(
                f"mode {i}: density channel gives c={root_m:.10g}, value channel "
                f"c={root_u:.10g}"
            )
    nu0, muT = modal_prediction(c, beta, time, scheme)
    residual = max(abs(nu0 - obs_u), abs(muT - obs_m))
    return F1Result(float(c), i, root_m, root_u, (obs_u, obs_m), residual, notes)


def _first_pairs(c, modes, space, time, basis, scheme):
    return {j: solve_first_order(c, basis.functions[j], space, time, basis, scheme)
            for j in modes}


def _stack(rec_u: NDArray, rec_m: NDArray, space: SpaceGrid) -> NDArray:
    # L2-weighted rows so least squares measures the quadrature norm
    w = np.sqrt(space.weights)
    return np.concatenate([w * rec_u, w * rec_m])


def _galerkin(
    order: int,
    data_rows: list[NDArray],
    column_rows: list[NDArray],
    K: int,
    basis: SpectralBasis,
    residual_tol: float,
    cond_max: float,
    tikhonov: float,
    scenarios: Sequence[int],
) -> CoefficientResult:
    b = np.concatenate(data_rows)
    A = np.concatenate(column_rows, axis=0)
    scale = np.linalg.norm(A, axis=0)
    if np.any(scale == 0.0):
        raise IllPosedTruncationError(
            f"order {order}: some modes do not influence the data; add probe scenarios")
    As = A / scale
    normal = As.T @ As
    cond = float(np.linalg.cond(normal))
    if cond > cond_max:
        raise IllPosedTruncationError(
            f"order {order}: sensitivity matrix condition number {cond:.2e} exceeds "
            f"{cond_max:.0e} with K={K}; add probe pairs or lower K")
    a = np.linalg.solve(normal + tikhonov * np.eye(K + 1), As.T @ b) / scale
    bn = np.linalg.norm(b)
    resid = float(np.linalg.norm(A @ a - b) / bn) if bn > 0 else float(np.linalg.norm(A @ a))
    values = basis.synthesize(np.pad(a, (0, len(basis) - K - 1)))
    return CoefficientResult(order, a, values, resid, cond, residual_tol, tuple(scenarios))


def _sensitivity(order, c, pair, K, space, time, basis, scheme) -> NDArray:
    m1 = pair.m.values
    cols = []
    for i in range(K + 1):
        src = basis.functions[i] * m1 ** order
        resp = solve_linear_system(c, space, time, basis, source_u=src, scheme=scheme)
        cols.append(_stack(resp.u.initial, resp.m.final, space))
    return np.column_stack(cols)


def recover_F2(
    oracle: MeasurementOracle,
    c: float,
    modes: Sequence[int] = (1, 2),
    K: int = 8,
    basis: SpectralBasis | None = None,
    scheme: TimeScheme = "crank_nicolson",
    residual_tol: float = 1e-6,
    cond_max: float = 1e10,
    tikhonov: float = 1e-12,
) -> CoefficientResult:
    """Recover ``F^(2)`` on modes ``0..K`` from scenarios ``f1 = f2 = mbar_j``.

    The part of the second-order response not involving ``F^(2)`` is the
    direct solve with ``F^(2) = 0``.
    """
    space, time = oracle.space, oracle.time
    if basis is None:
        raise ValueError("a basis is required")
    if K + 1 > len(basis):
        raise ValueError("K exceeds the basis size")
    pairs = _first_pairs(c, modes, space, time, basis, scheme)
    data, cols = [], []
    for j in modes:
        fj = basis.functions[j]
        rec = oracle.linearized([fj, fj])
        known = solve_second_order(c, 0.0, pairs[j], pairs[j], space, time, basis, scheme)
        data.append(_stack(rec.u0 - known.u.initial, rec.mT - known.m.final, space))
        cols.append(_sensitivity(2, c, pairs[j], K, space, time, basis, scheme))
    return _galerkin(2, data, cols, K, basis, residual_tol, cond_max, tikhonov, modes)


def recover_Fk(
    oracle: MeasurementOracle,
    lower: RunningCost,
    k: int,
    model: Callable[[RunningCost], MeasurementOracle] | None = None,
    modes: Sequence[int] = (1, 2),
    K: int = 8,
    basis: SpectralBasis | None = None,
    scheme: TimeScheme = "crank_nicolson",
    residual_tol: float = 1e-4,
    cond_max: float = 1e10,
    tikhonov: float = 1e-12,
) -> CoefficientResult:
    """Recover ``F^(k)`` given the orders below it.

    ``model(F)`` must return an oracle of the same kind as ``oracle`` for the
    cost ``F``; it supplies the order-``k`` response of ``lower`` (with
    ``F^(k) = 0``), which is then subtracted from the data.
    """
    if k < 2:
        raise ValueError("use recover_F1 for the first order")
    if basis is None:
        raise ValueError("a basis is required")
    space, time = oracle.space, oracle.time
    if model is None:
        model = getattr(oracle, "with_cost", None)
        if model is None:
            raise ValueError("oracle cannot build a model; pass `model`")
    known_oracle = model(lower.truncated(k - 1))
    c = lower.c1
    pairs = _first_pairs(c, modes, space, time, basis, scheme)
    data, cols = [], []
    for j in modes:
        dirs = [basis.functions[j]] * k
        rec = oracle.linearized(dirs)
        known = known_oracle.linearized(dirs)
        data.append(_stack(rec.u0 - known.u0, rec.mT - known.mT, space))
        cols.append(_sensitivity(k, c, pairs[j], K, space, time, basis, scheme))
    return _galerkin(k, data, cols, K, basis, residual_tol, cond_max, tikhonov, modes)


def recover_running_cost(
    oracle: MeasurementOracle,
    basis: SpectralBasis,
    K_taylor: int = 3,
    K_modes: int = 8,
    probe_modes: Sequence[int] = (1, 2),
    scenario_modes: Sequence[int] = (1, 2),
    bracket: tuple[float, float] = (1e-3, 50.0),
    c_agreement: float = 1e-5,
    scheme: TimeScheme = "crank_nicolson",
    model: Callable[[RunningCost], MeasurementOracle] | None = None,
) -> ReconstructionReport:
    """Steps I, II, III in sequence; any stage error propagates."""
    stage1 = [recover_F1(oracle, i, basis, bracket, scheme=scheme) for i in probe_modes]
    cs = np.array([r.c for r in stage1])
    spread = float(np.ptp(cs) / abs(cs[0]))
    if spread > c_agreement:
        raise InconsistentDataError(
            f"first coefficient differs across probe modes {list(probe_modes)}: {cs}")
    c1 = float(cs[0])
    notes = [f"probe spread {spread:.2e}"]
    probes = [f"order1 mode {i}" for i in probe_modes]
    higher: dict[int, CoefficientResult] = {}
    if K_taylor >= 2:
        higher[2] = recover_F2(oracle, c1, scenario_modes, K_modes, basis, scheme)
        probes += [f"order2 modes ({j},{j})" for j in scenario_modes]
    cost = RunningCost(c1, tuple(higher[k].values for k in sorted(higher)))
    for k in range(3, K_taylor + 1):
        higher[k] = recover_Fk(oracle, cost, k, model, scenario_modes, K_modes, basis, scheme)
        cost = cost.with_coefficient(k, higher[k].values)
        probes += [f"order{k} modes ({j},)*{k}" for j in scenario_modes]
    return ReconstructionReport(c1, stage1, higher, probes, notes)
