"""Elliptic boundary-value solvers on embedded grids and radial backends."""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import ConfigError
from .branch import RadialBranchSolution, radial_liouville_branch
from .fluxops import dirichlet_energy, h1_energy, normal_flux
from .grid2d import solve_grid2d
from .problems import (LAPLACE, MODIFIED_HELMHOLTZ, POISSON_UNIT,
                       AnnulusParams, DiscMeanfieldParams, EllipticProblem,
                       FluxProfile, SolverOptions, annulus_harmonic_oracle,
                       boundary_mass_root, dirichlet, disc_meanfield_oracle,
                       keller_segel_disc_oracle, neumann)
from .radial import RadialProfile, solve_radial


@dataclass(frozen=True)
class Grid2D:
    """Embedded-boundary Cartesian backend with spacing h."""
    h: float


@dataclass(frozen=True)
class Radial1D:
    """Exact radial backend with n intervals."""
    n: int = 4096


def solve(problem: EllipticProblem, backend, options: SolverOptions = None):
    """Solve an elliptic problem with the requested backend.

    ``backend`` is a :class:`Grid2D` or :class:`Radial1D` instance (or a
    string "grid2d"/"radial1d" with default resolution).
    """
    if isinstance(backend, str):
        backend = {"grid2d": Grid2D(h=1 / 128), "radial1d": Radial1D()}.get(backend)
        if backend is None:
            raise ConfigError("backend must be 'grid2d' or 'radial1d'")
    if isinstance(backend, Radial1D):
        return solve_radial(problem, n=backend.n, options=options)
    if isinstance(backend, Grid2D):
        return solve_grid2d(problem, h=backend.h, options=options)
    raise ConfigError(f"unsupported backend {backend!r}")


__all__ = [
    "LAPLACE", "POISSON_UNIT", "MODIFIED_HELMHOLTZ",
    "EllipticProblem", "FluxProfile", "SolverOptions",
    "AnnulusParams", "DiscMeanfieldParams",
    "annulus_harmonic_oracle", "disc_meanfield_oracle", "boundary_mass_root",
    "keller_segel_disc_oracle",
    "dirichlet", "neumann",
    "Grid2D", "Radial1D", "solve", "solve_grid2d", "solve_radial",
    "normal_flux", "dirichlet_energy", "h1_energy",
    "RadialProfile", "RadialBranchSolution", "radial_liouville_branch",
]
