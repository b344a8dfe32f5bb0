"""Fractional p-Laplacian on intervals: kernels, resolvents, eigenpairs and bifurcation branches."""
from importlib import metadata

from .bifurcation import ContinuationOptions, Nonlinearity, continue_branch
from .dirichlet import SolverOptions, solve_dirichlet
from .eigen import WeightFunction, first_eigenpair, full_spectrum_p2
from .energy import estimate_bbm_constant, gagliardo_energy, make_operator
from .grid import DiscreteFunction, Grid1D, assemble_kernel, build_grid

try:
    __version__ = metadata.version("artifact")
except metadata.PackageNotFoundError:  # pragma: no cover
    __version__ = "0.0.0"

__all__ = [
    "ContinuationOptions",
    "DiscreteFunction",
    "Grid1D",
    "Nonlinearity",
    "SolverOptions",
    "WeightFunction",
    "assemble_kernel",
    "build_grid",
    "continue_branch",
    "estimate_bbm_constant",
    "first_eigenpair",
    "full_spectrum_p2",
    "gagliardo_energy",
    "make_operator",
    "solve_dirichlet",
]
