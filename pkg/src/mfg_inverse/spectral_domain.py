"""Unit-interval (and unit-square) grids, trapezoid quadrature, the discrete
Neumann Laplacian and its cosine eigenbasis.

The discrete Laplacian uses ghost-point reflection at the boundary, which is
the same as a flux-form (finite volume) stencil with half cells at the two
end nodes.  Two facts follow and are relied on throughout the package:

* sampled cosines ``cos(i*pi*x_j)`` are *exact* eigenvectors of the stencil,
  with eigenvalue ``(4/h**2) * sin(i*pi*h/2)**2``;
* the stencil is self-adjoint with respect to the trapezoid weights and sums
  to zero against them, so trapezoid mass is conserved exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from numpy.typing import NDArray

__all__ = [
    "ResolutionError",
    "SpaceGrid",
    "TimeGrid",
    "SpectralBasis",
    "SpaceTimeField",
    "build_interval_basis",
    "build_square_basis",
    "full_grid_basis",
    "quadrature",
    "spacetime_quadrature",
    "neumann_laplacian_apply",
    "nodal_gradient",
    "face_gradient",
    "flux_divergence",
    "discrete_eigenvalue",
]

EigenvalueKind = Literal["analytic", "discrete"]


class ResolutionError(ValueError):
    """Requested modes are not resolved by the grid."""


@dataclass(frozen=True)
class SpaceGrid:
    """Uniform node-centred grid on the unit interval or unit square."""

    points_per_axis: int
    dimension: int = 1

    def __post_init__(self) -> None:
        if self.dimension not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.dimension}")
        if self.points_per_axis < 2:
            raise ValueError("need at least 2 points per axis")

    @property
    def spacing(self) -> float:
        return 1.0 / (self.points_per_axis - 1)

    @property
    def total_measure(self) -> float:
        return 1.0

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * self.dimension

    @property
    def size(self) -> int:
        return self.points_per_axis**self.dimension

    @property
    def axis(self) -> NDArray[np.float64]:
        return np.linspace(0.0, 1.0, self.points_per_axis)

    @property
    def nodes(self) -> NDArray[np.float64]:
        """Node coordinates: shape (N,) in 1-D, (N, N, 2) in 2-D."""
        if self.dimension == 1:
            return self.axis
        xx, yy = np.meshgrid(self.axis, self.axis, indexing="ij")
        return np.stack([xx, yy], axis=-1)

    @property
    def axis_weights(self) -> NDArray[np.float64]:
        w = np.full(self.points_per_axis, self.spacing)
        w[0] = w[-1] = 0.5 * self.spacing
        return w

    @property
    def weights(self) -> NDArray[np.float64]:
        w = self.axis_weights
        if self.dimension == 1:
            return w
        return np.outer(w, w)


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    steps: int

    def __post_init__(self) -> None:
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.steps < 1:
            raise ValueError("steps must be a positive integer")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def nodes(self) -> NDArray[np.float64]:
        return np.linspace(0.0, self.horizon, self.steps + 1)


@dataclass(frozen=True)
class SpectralBasis:
    """Neumann eigenpairs ``(beta_i, mbar_i)`` sampled on a grid.

    ``functions[i]`` is the grid function of mode ``i``; mode 0 is the
    constant.  ``count`` is the number of non-constant modes, so the basis
    holds ``count + 1`` functions.
    """

    grid: SpaceGrid
    eigenvalues: NDArray[np.float64]
    functions: NDArray[np.float64]
    kind: EigenvalueKind = "analytic"
    labels: tuple[tuple[int, ...], ...] = field(default=())

    @property
    def count(self) -> int:
        return len(self.eigenvalues) - 1

    def __len__(self) -> int:
        return len(self.eigenvalues)

    def mode(self, i: int) -> tuple[float, NDArray[np.float64]]:
        return float(self.eigenvalues[i]), self.functions[i]

    def project(self, f: NDArray[np.float64]) -> NDArray[np.float64]:
        """Coefficients ``<f, mbar_i>`` along the last spatial axes of ``f``."""
        f = np.asarray(f, dtype=float)
        w = self.grid.weights.reshape(-1)
        flat = f.reshape(f.shape[: f.ndim - self.grid.dimension] + (-1,))
        return (flat * w) @ self.functions.reshape(len(self), -1).T

    def synthesize(self, coeffs: NDArray[np.float64]) -> NDArray[np.float64]:
        coeffs = np.asarray(coeffs, dtype=float)
        flat = coeffs @ self.functions.reshape(len(self), -1)
        return flat.reshape(coeffs.shape[:-1] + self.grid.shape)


@dataclass(frozen=True)
class SpaceTimeField:
    """Scalar field indexed ``values[time_node, space_node...]``."""

    values: NDArray[np.float64]
    space: SpaceGrid
    time: TimeGrid

    def __post_init__(self) -> None:
        expected = (self.time.steps + 1,) + self.space.shape
        if self.values.shape != expected:
            raise ValueError(f"field shape {self.values.shape} != grid shape {expected}")

    @classmethod
    def zeros(cls, space: SpaceGrid, time: TimeGrid) -> SpaceTimeField:
        return cls(np.zeros((time.steps + 1,) + space.shape), space, time)

    @property
    def initial(self) -> NDArray[np.float64]:
        return self.values[0]

    @property
    def final(self) -> NDArray[np.float64]:
        return self.values[-1]

    def __add__(self, other: SpaceTimeField) -> SpaceTimeField:
        return SpaceTimeField(self.values + other.values, self.space, self.time)

    def __sub__(self, other: SpaceTimeField) -> SpaceTimeField:
        return SpaceTimeField(self.values - other.values, self.space, self.time)

    def scaled(self, a: float) -> SpaceTimeField:
        return SpaceTimeField(a * self.values, self.space, self.time)


def discrete_eigenvalue(i: int | NDArray, spacing: float) -> NDArray[np.float64] | float:
    """Eigenvalue of the negated reflection stencil on ``cos(i*pi*x)``."""
    return (4.0 / spacing**2) * np.sin(0.5 * np.asarray(i) * np.pi * spacing) ** 2


def _cosine_mode(i: int, x: NDArray[np.float64]) -> NDArray[np.float64]:
    if i == 0:
        return np.ones_like(x)
    return np.sqrt(2.0) * np.cos(i * np.pi * x)


def _check_nyquist(grid: SpaceGrid, highest: int) -> None:
    # at least 4 points per shortest wavelength 2/i
    if 4 * highest > 2 * (grid.points_per_axis - 1):
        raise ResolutionError(
            f"mode {highest} is under-resolved on {grid.points_per_axis} points per axis "
            f"(need <= {(grid.points_per_axis - 1) // 2})"
        )


def build_interval_basis(
    grid: SpaceGrid, count: int, eigenvalues: EigenvalueKind = "analytic"
) -> SpectralBasis:
    """Cosine eigenbasis on (0, 1): modes ``0..count``.

    ``eigenvalues="analytic"`` gives ``beta_i = (i*pi)**2``; ``"discrete"``
    gives the exact eigenvalues of the grid stencil for the same sampled
    functions, which makes modal solutions satisfy the semi-discrete equations
    to round-off.
    """
    if grid.dimension != 1:
        raise ValueError("build_interval_basis needs a 1-D grid; use build_square_basis")
    if count < 1:
        raise ValueError("count must be >= 1")
    _check_nyquist(grid, count)
    idx = np.arange(count + 1)
    if eigenvalues == "analytic":
        betas = (idx * np.pi) ** 2.0
    elif eigenvalues == "discrete":
        betas = discrete_eigenvalue(idx, grid.spacing)
    else:
        raise ValueError(f"unknown eigenvalue kind {eigenvalues!r}")
    funcs = np.stack([_cosine_mode(i, grid.axis) for i in idx])
    return SpectralBasis(grid, np.asarray(betas, dtype=float), funcs, eigenvalues,
                         tuple((int(i),) for i in idx))


def build_square_basis(
    grid: SpaceGrid, count: int, eigenvalues: EigenvalueKind = "analytic"
) -> SpectralBasis:
    """Tensor-product cosine modes on the unit square, lowest ``count + 1``.

    Eigenvalues are non-decreasing here (``(p, q)`` and ``(q, p)`` coincide).
    """
    if grid.dimension != 2:
        raise ValueError("build_square_basis needs a 2-D grid")
    if count < 1:
        raise ValueError("count must be >= 1")
    h = grid.spacing
    pmax = (grid.points_per_axis - 1) // 2
    pairs = [(p, q) for p in range(pmax + 1) for q in range(pmax + 1)]

    def beta(p: int, q: int) -> float:
        if eigenvalues == "analytic":
            return float(np.pi**2 * (p * p + q * q))
        return float(discrete_eigenvalue(p, h) + discrete_eigenvalue(q, h))

    pairs.sort(key=lambda pq: (beta(*pq), pq))
    if count + 1 > len(pairs):
        raise ResolutionError(f"only {len(pairs) - 1} resolved modes on this grid")
    chosen = pairs[: count + 1]
    x = grid.axis
    funcs = np.stack([np.outer(_cosine_mode(p, x), _cosine_mode(q, x)) for p, q in chosen])
    betas = np.array([beta(p, q) for p, q in chosen])
    return SpectralBasis(grid, betas, funcs, eigenvalues, tuple(chosen))


def full_grid_basis(grid: SpaceGrid) -> SpectralBasis:
    """All ``N`` discrete cosine eigenvectors of the 1-D stencil (a DCT-I).

    Complete and trapezoid-orthonormal on the grid, so projecting onto it is
    lossless.  The last mode ``cos((N-1)*pi*x)`` has unit norm without the
    sqrt(2) factor.
    """
    if grid.dimension != 1:
        raise ValueError("full_grid_basis is 1-D only")
    n = grid.points_per_axis
    idx = np.arange(n)
    funcs = np.stack([_cosine_mode(i, grid.axis) for i in idx])
    funcs[-1] = np.cos((n - 1) * np.pi * grid.axis)
    betas = discrete_eigenvalue(idx, grid.spacing)
    return SpectralBasis(grid, np.asarray(betas, dtype=float), funcs, "discrete",
                         tuple((int(i),) for i in idx))


def quadrature(grid: SpaceGrid, f: NDArray[np.float64]) -> NDArray[np.float64] | float:
    """Composite trapezoid integral over the domain (trailing spatial axes)."""
    f = np.asarray(f, dtype=float)
    if f.shape[f.ndim - grid.dimension:] != grid.shape:
        raise ValueError(f"slice shape {f.shape} does not match grid {grid.shape}")
    axes = tuple(range(f.ndim - grid.dimension, f.ndim))
    out = np.tensordot(f, grid.weights, axes=(axes, tuple(range(grid.dimension))))
    return float(out) if np.ndim(out) == 0 else out


def spacetime_quadrature(
    field: SpaceTimeField | NDArray[np.float64],
    space: SpaceGrid | None = None,
    time: TimeGrid | None = None,
    time_rule: Literal["trapezoid", "simpson"] = "trapezoid",
) -> float:
    """Integral over ``Q``: space trapezoid composed with a rule in time."""
    if isinstance(field, SpaceTimeField):
        values, space, time = field.values, field.space, field.time
    else:
        values = np.asarray(field, dtype=float)
    assert space is not None and time is not None
    per_t = quadrature(space, values)
    dt = time.dt
    if time_rule == "trapezoid":
        return float(dt * (per_t.sum() - 0.5 * (per_t[0] + per_t[-1])))
    if time_rule == "simpson":
        from scipy.integrate import simpson

        return float(simpson(per_t, dx=dt))
    raise ValueError(f"unknown time rule {time_rule!r}")


def _laplacian_axis(f: NDArray[np.float64], axis: int, h: float) -> NDArray[np.float64]:
    f = np.moveaxis(f, axis, -1)
    out = np.empty_like(f)
    out[..., 1:-1] = f[..., 2:] - 2.0 * f[..., 1:-1] + f[..., :-2]
    out[..., 0] = 2.0 * (f[..., 1] - f[..., 0])
    out[..., -1] = 2.0 * (f[..., -2] - f[..., -1])
    return np.moveaxis(out / h**2, -1, axis)


def neumann_laplacian_apply(grid: SpaceGrid, f: NDArray[np.float64]) -> NDArray[np.float64]:
    """Return ``Delta_h f`` (not its negative) with reflecting ghost points.

    Works on a single slice or on a stack with leading (time) axes.
    """
    f = np.asarray(f, dtype=float)
    if grid.points_per_axis < 3:
        raise ValueError("Laplacian needs at least 3 points per axis")
    if f.shape[f.ndim - grid.dimension:] != grid.shape:
        raise ValueError(f"slice shape {f.shape} does not match grid {grid.shape}")
    h = grid.spacing
    out = _laplacian_axis(f, -1, h)
    if grid.dimension == 2:
        out = out + _laplacian_axis(f, -2, h)
    return out


def nodal_gradient(grid: SpaceGrid, f: NDArray[np.float64]) -> NDArray[np.float64]:
    """Central nodal derivative; zero at the end nodes (reflected ghost)."""
    if grid.dimension != 1:
        raise NotImplementedError("gradients are 1-D only")
    f = np.asarray(f, dtype=float)
    g = np.zeros_like(f)
    g[..., 1:-1] = (f[..., 2:] - f[..., :-2]) / (2.0 * grid.spacing)
    return g


def face_gradient(grid: SpaceGrid, f: NDArray[np.float64]) -> NDArray[np.float64]:
    """Derivative on the N-1 interior faces ``x_{j+1/2}``."""
    f = np.asarray(f, dtype=float)
    return (f[..., 1:] - f[..., :-1]) / grid.spacing


def flux_divergence(
    grid: SpaceGrid, m: NDArray[np.float64], u: NDArray[np.float64]
) -> NDArray[np.float64]:
    """Conservative ``div(m grad u)``: face flux with averaged ``m``.

    Boundary faces carry zero flux and the end nodes own half cells, so the
    trapezoid integral of the result is exactly zero.
    """
    if grid.dimension != 1:
        raise NotImplementedError("flux divergence is 1-D only")
    m = np.asarray(m, dtype=float)
    flux = 0.5 * (m[..., 1:] + m[..., :-1]) * face_gradient(grid, u)
    h = grid.spacing
    out = np.empty(np.broadcast_shapes(m.shape, np.shape(u)))
    out[..., 1:-1] = (flux[..., 1:] - flux[..., :-1]) / h
    out[..., 0] = flux[..., 0] / (0.5 * h)
    out[..., -1] = -flux[..., -1] / (0.5 * h)
    return out
