"""Running costs F(x, m) stored as Taylor coefficients about m = 1."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .spectral_domain import SpaceGrid

__all__ = [
    "RunningCost",
    "AdmissibilityReport",
    "evaluate",
    "check_admissible",
    "parse_coefficient",
    "mode_function",
]


@dataclass(frozen=True)
class RunningCost:
    """``F(x, z) = c1 (z-1) + sum_{k>=2} F^(k)(x) (z-1)^k / k!``.

    ``higher[0]`` is ``F^(2)``, ``higher[1]`` is ``F^(3)`` and so on.  The
    first coefficient is a scalar.  Construction does not enforce ``c1 > 0``;
    that is what :func:`check_admissible` is for (non-admissible costs are
    still useful for generating counter-example data).
    """

    c1: float
    higher: tuple[NDArray[np.float64], ...] = field(default=())

    def __post_init__(self) -> None:
        object.__setattr__(self, "c1", float(self.c1))
        object.__setattr__(
            self, "higher", tuple(np.asarray(h, dtype=float) for h in self.higher)
        )

    @property
    def order(self) -> int:
        """Highest stored Taylor order ``K_max``."""
        return 1 + len(self.higher)

    def coefficient(self, k: int, grid: SpaceGrid) -> NDArray[np.float64]:
        """``F^(k)`` as a grid function (zero beyond the stored order)."""
        if k < 1:
            raise ValueError("Taylor orders start at 1")
        if k == 1:
            return np.full(grid.shape, self.c1)
        if k - 2 < len(self.higher):
            return np.broadcast_to(self.higher[k - 2], grid.shape).copy()
        return np.zeros(grid.shape)

    def with_coefficient(self, k: int, values: NDArray[np.float64] | float) -> RunningCost:
        """Copy with ``F^(k)`` replaced; pads intermediate orders with zeros."""
        if k == 1:
            return RunningCost(float(values), self.higher)
        higher = list(self.higher)
        values = np.asarray(values, dtype=float)
        while len(higher) < k - 1:
            higher.append(np.zeros_like(values))
        higher[k - 2] = values
        return RunningCost(self.c1, tuple(higher))

    def truncated(self, order: int) -> RunningCost:
        return RunningCost(self.c1, self.higher[: max(order - 1, 0)])

    def __call__(self, m: NDArray[np.float64]) -> NDArray[np.float64]:
        return evaluate(self, m)


def evaluate(F: RunningCost, m: NDArray[np.float64]) -> NDArray[np.float64]:
    """Pointwise truncated series; broadcasts over leading (time) axes."""
    z = np.asarray(m, dtype=float) - 1.0
    out = F.c1 * z
    zk = z
    for k, coeff in enumerate(F.higher, start=2):
        zk = zk * z
        out = out + coeff * zk / math.factorial(k)
    return out


@dataclass
class AdmissibilityReport:
    ok: bool
    failures: list[tuple[str, str]]

    def __bool__(self) -> bool:
        return self.ok

    def __str__(self) -> str:
        if self.ok:
            return "admissible"
        return "; ".join(f"clause ({c}): {msg}" for c, msg in self.failures)


def check_admissible(F: RunningCost) -> AdmissibilityReport:
    failures = []
    if not math.isfinite(F.c1) or F.c1 <= 0.0:
        failures.append(("iii", f"first coefficient must be a positive real, got {F.c1}"))
    for k, coeff in enumerate(F.higher, start=2):
        if not np.all(np.isfinite(coeff)):
            failures.append(("i", f"coefficient F^({k}) has non-finite values"))
    return AdmissibilityReport(not failures, failures)


def mode_function(i: int, grid: SpaceGrid) -> NDArray[np.float64]:
    """Normalised cosine mode ``mbar_i`` sampled on a 1-D grid."""
    x = grid.axis
    if grid.dimension != 1:
        raise NotImplementedError("mode expressions are 1-D only")
    return np.ones_like(x) if i == 0 else np.sqrt(2.0) * np.cos(i * np.pi * x)


_TERM = re.compile(r"^([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?|[+-])?\*?(mode(\d+))?$")


def parse_coefficient(text: str, grid: SpaceGrid) -> NDArray[np.float64]:
    """Parse a coefficient expression into a grid function.

    Accepted forms: a number (constant), ``0.3*mode1`` (single eigenmode),
    sums such as ``0.3*mode1 + 0.1*mode3 - 0.2`` (finite cosine sum), or
    ``[v0, v1, ...]`` with one sample per grid node.
    """
    text = text.strip()
    if text.startswith("["):
        values = np.array([float(v) for v in text.strip("[]").split(",") if v.strip()])
        if values.shape != grid.shape:
            raise ValueError(f"sampled coefficient has {values.size} values, grid has {grid.size}")
        return values
    out = np.zeros(grid.shape)
    terms = re.split(r"(?<![eE])(?=[+-])", text.replace(" ", ""))
    terms = [t for t in terms if t]
    if not terms:
        raise ValueError("empty coefficient expression")
    for term in terms:
        match = _TERM.match(term)
        if not match or (match.group(1) is None and match.group(2) is None):
            raise ValueError(f"cannot parse coefficient term {term!r}")
        num = match.group(1)
        if num in (None, "+"):
            scale = 1.0
        elif num == "-":
            scale = -1.0
        else:
            scale = float(num)
        if match.group(2):
            out += scale * mode_function(int(match.group(3)), grid)
        else:
            out += scale
    return out
