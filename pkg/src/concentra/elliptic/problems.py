"""Problem descriptions, flux profiles and closed-form radial oracles."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from ..errors import ConfigError
from ..geometry import ClosedCurve, Domain2D

LAPLACE = "laplace"
POISSON_UNIT = "poisson_unit"
MODIFIED_HELMHOLTZ = "modified_helmholtz"
OPERATORS = (LAPLACE, POISSON_UNIT, MODIFIED_HELMHOLTZ)


def dirichlet(value):
    """Dirichlet condition; value is a constant or a callable of (n,2) points."""
    return ("dirichlet", value)


def neumann():
    """Homogeneous Neumann condition."""
    return ("neumann", None)


@dataclass
class SolverOptions:
    rel_residual: float = 1e-10
    max_iter: int = 20000
    direct_limit: int = 1_000_000   # unknowns above this use preconditioned Krylov

    @classmethod
    def from_config(cls, cfg):
        cfg = cfg or {}
        return cls(rel_residual=float(cfg.get("solver.rel_residual", 1e-10)),
                   max_iter=int(cfg.get("solver.max_iter", 20000)))


@dataclass
class EllipticProblem:
    """Linear elliptic boundary-value problem on one side of an optional
    internal curve.

    ``bcs`` maps boundary component names ("outer", "hole", "gamma") to
    conditions built with :func:`dirichlet` / :func:`neumann`.  ``side``
    selects the plus side of gamma (the side its normals point into), the
    minus side, or the whole domain.
    """

    domain: Domain2D
    operator: str
    bcs: dict
    gamma: ClosedCurve = None
    side: str = "whole"

    def __post_init__(self):
        if self.operator not in OPERATORS:
            raise ConfigError(f"unknown operator {self.operator!r}")
        if self.side not in ("whole", "plus", "minus"):
            raise ConfigError(f"unknown side {self.side!r}")
        if self.side != "whole" and self.gamma is None:
            raise ConfigError("side solves need an internal curve")
        for name, bc in self.bcs.items():
            if name not in ("outer", "hole", "gamma"):
                raise ConfigError(f"unknown boundary component {name!r}")
            if bc[0] not in ("dirichlet", "neumann"):
                raise ConfigError(f"unknown boundary condition {bc[0]!r}")
        for name in self.boundary_components():
            if name not in self.bcs:
                raise ConfigError(f"missing boundary condition for {name!r}")
        if self.operator in (LAPLACE, POISSON_UNIT):
            if all(self.bcs[name][0] == "neumann" for name in self.boundary_components()):
                raise ConfigError("pure Neumann problem is not uniquely solvable")

    def boundary_components(self):
        names = []
        if self.side in ("whole", "minus"):
            names.append("outer")
        if self.side in ("whole", "plus") and self.domain.hole is not None:
            names.append("hole")
        if self.side != "whole":
            names.append("gamma")
        # a gamma given for a whole-domain problem is treated as an interior
        # Dirichlet curve only when a bc was supplied for it
        if self.side == "whole" and self.gamma is not None and "gamma" in self.bcs:
            names.append("gamma")
        return names


@dataclass
class FluxProfile:
    """Normal derivative samples along a curve (one value per curve sample)."""

    s: np.ndarray
    values: np.ndarray
    side: str = ""

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.s.shape != self.values.shape:
            raise ConfigError("flux profile arclength/value lengths differ")
        if not np.all(np.isfinite(self.values)):
            raise ConfigError("flux profile contains non-finite values")

    @property
    def sup(self):
        return float(np.max(np.abs(self.values)))

    def l2(self, length=None):
        total = length if length is not None else (self.s[-1] - self.s[0])
        ds = total / len(self.s)
        return float(np.sqrt(np.sum(self.values ** 2) * ds))

    def to_csv(self, path_or_buf):
        def _write(f):
            w = csv.writer(f)
            w.writerow(["s", "flux"])
            for si, v in zip(self.s, self.values):
                w.writerow([repr(float(si)), repr(float(v))])
        if hasattr(path_or_buf, "write"):
            _write(path_or_buf)
        else:
            with open(path_or_buf, "w", newline="") as f:
                _write(f)

    def csv_string(self):
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()


# ---------------------------------------------------------------------------
# closed-form oracles
# ---------------------------------------------------------------------------

@dataclass
class AnnulusParams:
    """Coefficients of the two-sided harmonic measure of the circle
    r = sqrt(R1 R2) in the annulus R2 < r < R1.

    The "+" coefficients describe the log-harmonic branch that vanishes at
    r = R1 and the "-" coefficients the branch vanishing at r = R2; both
    branches equal 1 on r = R.
    """

    R1: float
    R2: float
    R: float
    a_plus: float
    a_minus: float
    b_plus: float
    b_minus: float

    def value_outer_ring(self, r):
        """Harmonic measure restricted to R <= r <= R1."""
        return self.a_plus + self.b_plus * np.log(r)

    def value_inner_ring(self, r):
        """Harmonic measure restricted to R2 <= r <= R."""
        return self.a_minus + self.b_minus * np.log(r)

    def value(self, r):
        r = np.asarray(r, dtype=float)
        return np.where(r >= self.R, self.value_outer_ring(r), self.value_inner_ring(r))


def annulus_harmonic_oracle(R1, R2):
    """Exact coefficients a(+/-), b(+/-) of the annulus harmonic measure."""
    if not (R1 > R2 > 0):
        raise ConfigError("annulus oracle requires R1 > R2 > 0")
    half_log_ratio = 0.5 * (np.log(R1) - np.log(R2))   # log sqrt(R1/R2) > 0
    b_minus = 1.0 / half_log_ratio
    b_plus = -b_minus
    a_minus = -np.log(R2) / half_log_ratio
    a_plus = np.log(R1) / half_log_ratio
    return AnnulusParams(R1=float(R1), R2=float(R2), R=float(np.sqrt(R1 * R2)),
                         a_plus=float(a_plus), a_minus=float(a_minus),
                         b_plus=float(b_plus), b_minus=float(b_minus))


@dataclass
class DiscMeanfieldParams:
    """Closed-form radial concentration data for the unit-source problem on a
    disc of radius R1: K_plus = a_plus + r^2/4 inside the concentration circle
    and K_minus = a_minus + b_minus log r + r^2/4 outside."""

    variant: str
    R1: float
    R: float
    a_plus: float
    a_minus: float
    b_minus: float
    r_star: float = None

    def value_plus(self, r):
        return self.a_plus + 0.25 * np.asarray(r, dtype=float) ** 2

    def value_minus(self, r):
        r = np.asarray(r, dtype=float)
        return self.a_minus + self.b_minus * np.log(r) + 0.25 * r ** 2


def boundary_mass_root(lo=2.0, hi=10.0):
    """Root r* > 2 of (1/2) log r - r/4 + 1/4 = 0, bisection to 1e-12."""
    f = lambda r: 0.5 * np.log(r) - 0.25 * r + 0.25
    return float(brentq(f, lo, hi, xtol=1e-12))


def disc_meanfield_oracle(R1, variant="interior"):
    """Free-boundary radius and radial coefficients on the disc.

    ``interior``: the concentration circle halves the disc area,
    R = R1/sqrt(2).  ``boundary_mass``: the outer field also equals 1 on the
    disc boundary and R = R1/sqrt(r*) with r* the root of
    (1/2) log r - r/4 + 1/4 = 0 above 2.
    """
    if R1 <= 0:
        raise ConfigError("disc oracle requires R1 > 0")
    if variant == "interior":
        R = R1 / np.sqrt(2.0)
        b_minus = -0.5 * R1 ** 2          # Neumann on the disc boundary
        r_star = None
    elif variant == "boundary_mass":
        r_star = boundary_mass_root()
        R = R1 / np.sqrt(r_star)
        b_minus = -R ** 2                 # flux balance across the circle
    else:
        raise ConfigError(f"unknown disc oracle variant {variant!r}")
    a_plus = 1.0 - 0.25 * R ** 2
    a_minus = 1.0 - b_minus * np.log(R) - 0.25 * R ** 2
    return DiscMeanfieldParams(variant=variant, R1=float(R1), R=float(R),
                               a_plus=float(a_plus), a_minus=float(a_minus),
                               b_minus=float(b_minus), r_star=r_star)


def keller_segel_disc_oracle(R1=1.0):
    """Radius of the flux-balanced concentration circle for the resonance-free
    disc problem (Laplacian plus identity, Neumann outer data), found from the
    Bessel closed forms by bracketing the flux mismatch."""
    from scipy import special

    def balance(R):
        M = np.array([[special.j0(R), special.y0(R)],
                      [special.j1(R1), special.y1(R1)]])
        A, B = np.linalg.solve(M, np.array([1.0, 0.0]))
        return special.j1(R) / special.j0(R) + A * special.j1(R) + B * special.y1(R)

    return float(brentq(balance, 0.2 * R1, 0.95 * R1, xtol=1e-13))
