"""Forward solver, linearisations and coefficient recovery for a mean field game
on the unit interval with a density-dependent running cost."""

from .forward_solver import ForwardConfig, MFGSolution, solve_mfg
from .running_cost import RunningCost, check_admissible
from .spectral_domain import SpaceGrid, SpectralBasis, TimeGrid, full_grid_basis

__all__ = [
    "ForwardConfig",
    "MFGSolution",
    "RunningCost",
    "SpaceGrid",
    "SpectralBasis",
    "TimeGrid",
    "check_admissible",
    "full_grid_basis",
    "solve_mfg",
]

__version__ = "0.1.0"
