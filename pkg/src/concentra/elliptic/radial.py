"""Exact radial backend: second-order finite differences on rings and discs.

Ring regions (not containing the center) are discretized uniformly in
tau = log r, where the Laplacian becomes e^{-2 tau} d^2/dtau^2; harmonic
functions are linear in tau so the scheme reproduces them to round-off.
Regions containing the center use a uniform grid in r with the regularity
closure 4 (u_1 - u_0) / h^2 for the Laplacian at r = 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from ..errors import ConfigError, NumericsError
from ..geometry import circle
from .problems import (LAPLACE, MODIFIED_HELMHOLTZ, POISSON_UNIT,
                       EllipticProblem, SolverOptions)


@dataclass
class RadialProfile:
    """Radially symmetric field u(r) on [r[0], r[-1]].

    ``coord`` records the native discretization variable ("log" or "r");
    interpolation and endpoint derivatives are performed in that variable.
    """

    r: np.ndarray
    values: np.ndarray
    center: tuple = (0.0, 0.0)
    coord: str = "log"
    residual: float = 0.0

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=float)
        self.values = np.asarray(self.values, dtype=float)

    @property
    def tau(self):
        return np.log(self.r) if self.coord == "log" else self.r

    def evaluate(self, r):
        r = np.asarray(r, dtype=float)
        if self.coord == "log":
            return np.interp(np.log(r), np.log(self.r), self.values)
        return np.interp(r, self.r, self.values)

    def evaluate_points(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        rr = np.hypot(pts[:, 0] - self.center[0], pts[:, 1] - self.center[1])
        return self.evaluate(rr)

    # -- endpoint derivatives ------------------------------------------------
    def du_dr_end(self, which):
        """One-sided second-order du/dr at the inner ("lo") or outer ("hi")
        endpoint, computed in the native coordinate."""
        x = self.tau
        u = self.values
        if which == "lo":
            ux = (-3 * u[0] + 4 * u[1] - u[2]) / (x[2] - x[0])
            r0 = self.r[0]
        elif which == "hi":
            ux = (3 * u[-1] - 4 * u[-2] + u[-3]) / (x[-1] - x[-3])
            r0 = self.r[-1]
        else:
            raise ConfigError("which must be 'lo' or 'hi'")
        if self.coord == "log":
            return ux / r0
        return ux

    # -- integrals -------------------------------------------------------------
    def dirichlet_energy(self):
        """integral of |grad u|^2 over the annular region, 2 pi int u_r^2 r dr.

        In log coordinates this reduces to 2 pi int u_tau^2 dtau, evaluated
        per interval (exact for piecewise-linear data)."""
        u = self.values
        if self.coord == "log":
            t = np.log(self.r)
            du = np.diff(u) / np.diff(t)
            return float(2 * np.pi * np.sum(du ** 2 * np.diff(t)))
        du = np.diff(u) / np.diff(self.r)
        rmid = 0.5 * (self.r[1:] + self.r[:-1])
        return float(2 * np.pi * np.sum(du ** 2 * rmid * np.diff(self.r)))

    def h1_norm_sq(self):
        """integral of |grad u|^2 + u^2 over the region."""
        umid = 0.5 * (self.values[1:] + self.values[:-1])
        rmid = 0.5 * (self.r[1:] + self.r[:-1])
        mass = 2 * np.pi * np.sum(umid ** 2 * rmid * np.diff(self.r))
        return self.dirichlet_energy() + float(mass)

    def integrate(self, func=None):
        """2 pi int f(u(r)) r dr via the trapezoid rule on the native grid."""
        f = self.values if func is None else func(self.values)
        return float(2 * np.pi * np.trapezoid(f * self.r, self.r))

    # -- level sets --------------------------------------------------------------
    def level_radius(self, level):
        u = self.values
        sgn = np.sign(u - level)
        flips = np.where(sgn[:-1] * sgn[1:] < 0)[0]
        exact = np.where(sgn == 0)[0]
        if len(exact) == 1 and len(flips) == 0:
            return float(self.r[exact[0]])
        if len(flips) == 0:
            raise NumericsError("extract_level_curve", "level set empty")
        if len(flips) > 1:
            raise NumericsError("extract_level_curve",
                                f"level set has {len(flips)} components")
        i = flips[0]
        x = self.tau
        w = (level - u[i]) / (u[i + 1] - u[i])
        xc = x[i] + w * (x[i + 1] - x[i])
        return float(np.exp(xc)) if self.coord == "log" else float(xc)

    def level_curve(self, level, n=512):
        return circle(self.level_radius(level), center=self.center, n=n)


# ---------------------------------------------------------------------------
# solver
# ---------------------------------------------------------------------------

def _circle_radius(curve, center, tol=1e-6):
    d = np.hypot(curve.samples[:, 0] - center[0], curve.samples[:, 1] - center[1])
    R = float(np.mean(d))
    if np.max(np.abs(d - R)) > tol * max(R, 1.0):
        raise NumericsError("radial1d",
                            "internal curve is not a centered circle; use the grid2d backend")
    return R


def _interval_for(problem: EllipticProblem):
    dom = problem.domain
    if not dom.is_radial:
        raise NumericsError("radial1d", "domain is not a disc or annulus")
    rlo = 0.0 if dom.kind == "disc" else dom.R2
    rhi = dom.R1
    comp_lo = None if dom.kind == "disc" else "hole"
    comp_hi = "outer"
    if problem.side == "plus":
        R = _circle_radius(problem.gamma, dom.center)
        rhi, comp_hi = R, "gamma"
    elif problem.side == "minus":
        R = _circle_radius(problem.gamma, dom.center)
        rlo, comp_lo = R, "gamma"
    elif problem.gamma is not None and "gamma" in problem.bcs:
        raise NumericsError("radial1d", "interior Dirichlet curve needs side solves")
    return rlo, rhi, comp_lo, comp_hi


def _bc_value(bc, radius, center):
    kind, value = bc
    if kind != "dirichlet":
        return None
    if callable(value):
        return float(np.mean(value(np.array([[center[0] + radius, center[1]]]))))
    return float(value)


def solve_radial(problem: EllipticProblem, n=4096, options: SolverOptions = None):
    """Solve the radial reduction of the problem on n+1 nodes."""
    options = options or SolverOptions()
    rlo, rhi, comp_lo, comp_hi = _interval_for(problem)
    center = problem.domain.center
    use_log = rlo > 0
    m = n
    if use_log:
        x = np.linspace(np.log(rlo), np.log(rhi), m + 1)
        r = np.exp(x)
    else:
        x = np.linspace(rlo, rhi, m + 1)
        r = x
    h = x[1] - x[0]

    helm = problem.operator == MODIFIED_HELMHOLTZ
    poisson = problem.operator == POISSON_UNIT

    # tridiagonal assembly: sub, diag, sup
    diag = np.zeros(m + 1)
    sub = np.zeros(m + 1)
    sup = np.zeros(m + 1)
    rhs = np.zeros(m + 1)

    if use_log:
        c = np.exp(2 * x) if helm else np.zeros_like(x)
        f = np.exp(2 * x) if poisson else np.zeros_like(x)
        diag[:] = -2.0 / h ** 2 + c
        sub[:] = 1.0 / h ** 2
        sup[:] = 1.0 / h ** 2
        rhs[:] = f
    else:
        c = 1.0 if helm else 0.0
        f = 1.0 if poisson else 0.0
        diag[:] = -2.0 / h ** 2 + c
        sub[:] = 1.0 / h ** 2
        sup[:] = 1.0 / h ** 2
        rhs[:] = f
        idx = np.arange(1, m)
        sub[idx] -= 1.0 / (2 * h * r[idx])
        sup[idx] += 1.0 / (2 * h * r[idx])
        # center regularity: laplacian -> 4 (u1 - u0) / h^2
        diag[0] = -4.0 / h ** 2 + c
        sup[0] = 4.0 / h ** 2
        rhs[0] = f

    def apply_end(i_end, comp, inner):
        if comp is None:
            return  # disc center handled by the regularity row
        bc = problem.bcs[comp]
        if bc[0] == "dirichlet":
            diag[i_end] = 1.0
            (sup if inner else sub)[i_end] = 0.0
            rhs[i_end] = _bc_value(bc, r[i_end], center)
        else:
            # ghost-node reflection keeps the row tridiagonal and second order
            if inner:
                diag[i_end] = -2.0 / h ** 2 + (c[i_end] if use_log else c)
                sup[i_end] = 2.0 / h ** 2
                rhs[i_end] = f[i_end] if use_log else f
                if not use_log:
                    sup[i_end] = 2.0 / h ** 2  # u'(r) term drops since u_{-1}=u_1
            else:
                diag[i_end] = -2.0 / h ** 2 + (c[i_end] if use_log else c)
                sub[i_end] = 2.0 / h ** 2
                rhs[i_end] = f[i_end] if use_log else f

    apply_end(0, comp_lo, inner=True)
    apply_end(m, comp_hi, inner=False)

    ab = np.zeros((3, m + 1))
    ab[0, 1:] = sup[:-1]
    ab[1, :] = diag
    ab[2, :-1] = sub[1:]
    try:
        u = solve_banded((1, 1), ab, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericsError("radial1d", f"singular system ({exc})") from exc

    # residual and resonance guard
    res = diag * u
    res[:-1] += sup[:-1] * u[1:]
    res[1:] += sub[1:] * u[:-1]
    res -= rhs
    scale = max(np.max(np.abs(rhs)), np.max(np.abs(u)) * np.max(np.abs(diag)), 1e-300)
    rel = float(np.max(np.abs(res)) / scale)
    if not np.all(np.isfinite(u)) or rel > max(options.rel_residual, 1e-9):
        raise NumericsError("radial1d", f"solve did not converge (residual {rel:.2e})")
    bc_scale = max(1.0, *(abs(_bc_value(problem.bcs[cmp], r[-1], center) or 0.0)
                          for cmp in problem.boundary_components()
                          if problem.bcs[cmp][0] == "dirichlet"))
    if helm and np.max(np.abs(u)) > 1e12 * bc_scale:
        raise NumericsError("radial1d", "near-resonant system (condition estimate > 1e12)")

    return RadialProfile(r=r, values=u, center=center,
                         coord="log" if use_log else "r", residual=rel)
