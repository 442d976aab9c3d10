"""Mass integrals, profile-limit checks and convergence studies."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .asymptotic import ApproxSolution, Potential, beta_of, inner_profile
from .elliptic import (EllipticProblem, Grid2D, Radial1D, dirichlet,
                       annulus_harmonic_oracle, radial_liouville_branch, solve)
from .elliptic.radial import RadialProfile
from .errors import ConfigError, NumericsError
from .fields import ScalarField
from .freeboundary import LIOUVILLE, MEANFIELD_BOUNDARY, ModulusReport, \
    liouville_free_boundary
from .geometry import build_domain, circle, extract_level_curve
from .fields import analytic_field


@dataclass
class MassReport:
    model: str
    lam: float
    scale: float                    # normalization actually used
    beta: float = None
    rho: float = None
    computed_mass: float = 0.0
    predicted_mass: float = 0.0
    relative_error: float = 0.0
    concentration_fraction: float = 0.0
    mass_over_beta: float = None    # raw beta-normalized value (blow-up model)

    def to_dict(self):
        d = {"model": self.model, "lambda": self.lam, "scale": self.scale,
             "computed_mass": self.computed_mass,
             "predicted_mass": self.predicted_mass,
             "relative_error": self.relative_error,
             "concentration_fraction": self.concentration_fraction}
        if self.beta is not None:
            d["beta"] = self.beta
        if self.rho is not None:
            d["rho"] = self.rho
        if self.mass_over_beta is not None:
            d["mass_over_beta"] = self.mass_over_beta
        return d


def _weighted_exp_integral(approx: ApproxSolution, pot: Potential, region=None):
    """integral of V e^(glued) over the region, evaluated in shifted form;
    returns (log_integral, fraction_near_curve)."""
    glued = approx.glued
    band = 2.0 * approx.blend_delta
    if isinstance(glued, RadialProfile):
        r = glued.r
        logV = np.log(pot.on_xy(glued.center[0] + r, np.full_like(r, glued.center[1])))
        expo = glued.values + logV
        m = float(np.max(expo))
        w = np.exp(expo - m) * r
        total = 2.0 * np.pi * np.trapezoid(w, r)
        Rg = float(np.mean(np.hypot(approx.fb.gamma.samples[:, 0] - glued.center[0],
                                    approx.fb.gamma.samples[:, 1] - glued.center[1])))
        near = np.abs(r - Rg) <= band
        if approx.alpha_layer is not None:
            near |= (glued.r[-1] - r) <= 2.0 * approx.alpha_layer["delta"]
        wn = np.where(near, w, 0.0)
        frac = float(np.trapezoid(wn, r) / np.trapezoid(w, r))
        return m + np.log(total), frac
    # grid field
    sel = glued.defined
    X, Y = glued.meshgrid()
    logV = np.log(pot.on_xy(X[sel], Y[sel]))
    expo = glued.values[sel] + logV
    m = float(np.max(expo))
    total = float(np.sum(np.exp(expo - m)) * glued.h ** 2)
    pts = np.column_stack([X[sel], Y[sel]])
    _, t = approx.patch.inverse(pts, clip=True)
    near = np.abs(t) <= band
    if approx.alpha_layer is not None:
        foot = approx.fb.domain.outer.project(pts)[0]
        tau = np.hypot(pts[:, 0] - foot[:, 0], pts[:, 1] - foot[:, 1])
        near |= tau <= 2.0 * approx.alpha_layer["delta"]
    frac = float(np.sum(np.exp(expo[near] - m)) * glued.h ** 2 / total)
    return m + np.log(total), frac


def concentrated_mass(approx: ApproxSolution, pot: Potential,
                      modulus: ModulusReport = None) -> MassReport:
    """Normalized concentrated mass of the glued field.

    The integral lam^2 int V e^(glued) is divided by the scale the
    construction carries: rho for the mean-field models (total-mass identity
    (lam^2/rho) int e^u = 1) and the outer amplitude beta + 2 log beta for
    the blow-up model, whose prediction is the capacity mass 8 pi / log(R1/R2).
    The raw beta-normalized value is recorded alongside."""
    params = approx.params
    lam = params.lam
    log_int, frac = _weighted_exp_integral(approx, pot)
    log_mass = 2.0 * np.log(lam) + log_int
    scale = params.mass_scale
    computed = float(np.exp(log_mass - np.log(scale)))
    if params.model == LIOUVILLE:
        if modulus is None:
            raise ConfigError("the blow-up mass prediction needs a modulus report")
        predicted = modulus.mass_prediction
        mass_over_beta = float(np.exp(log_mass - np.log(params.beta)))
    else:
        predicted = 1.0
        mass_over_beta = None
    if not np.isfinite(computed):
        raise NumericsError("concentrated_mass", "quadrature overflow despite shift")
    rel = abs(computed - predicted) / abs(predicted)
    return MassReport(model=params.model, lam=lam, scale=float(scale),
                      beta=params.beta, rho=params.rho,
                      computed_mass=computed, predicted_mass=float(predicted),
                      relative_error=float(rel), concentration_fraction=frac,
                      mass_over_beta=mass_over_beta)


@dataclass
class ProfileCheck:
    margin: float
    sup_plus: float
    sup_minus: float

    @property
    def sup(self):
        return max(self.sup_plus, self.sup_minus)

    def to_dict(self):
        return {"margin": self.margin, "sup_plus": self.sup_plus,
                "sup_minus": self.sup_minus, "sup": self.sup}


def theorem_profile_check(approx: ApproxSolution, fb=None, margin=0.25) -> ProfileCheck:
    """Sup deviation of glued / amplitude from the unit-trace outer limits on
    the set at distance >= margin from the concentration curve."""
    fb = fb or approx.fb
    if margin <= approx.blend_delta:
        raise ConfigError("margin must exceed the blend width")
    amp = approx.params.outer_amplitude
    glued = approx.glued
    if isinstance(glued, RadialProfile):
        r = glued.r
        Rg = float(np.mean(np.hypot(fb.gamma.samples[:, 0] - glued.center[0],
                                    fb.gamma.samples[:, 1] - glued.center[1])))
        t = Rg - r
        sups = {}
        for side, fld in (("plus", fb.field_plus), ("minus", fb.field_minus)):
            sel = (t >= margin) if side == "plus" else (t <= -margin)
            sel &= (r >= fld.r[0] - 1e-12) & (r <= fld.r[-1] + 1e-12)
            if not np.any(sel):
                raise NumericsError("theorem_profile_check",
                                    f"empty region on the {side} side (margin too large)")
            H = fld.evaluate(r[sel])
            sups[side] = float(np.max(np.abs(glued.values[sel] / amp - H)))
        return ProfileCheck(margin=float(margin), sup_plus=sups["plus"],
                            sup_minus=sups["minus"])
    sel = glued.defined
    X, Y = glued.meshgrid()
    pts = np.column_stack([X[sel], Y[sel]])
    _, t = approx.patch.inverse(pts, clip=True)
    vals = glued.values[sel] / amp
    sups = {}
    for side, fld in (("plus", fb.field_plus), ("minus", fb.field_minus)):
        m = (t >= margin) if side == "plus" else (t <= -margin)
        m &= fld.defined[sel] if isinstance(fld, ScalarField) else m
        if not np.any(m):
            raise NumericsError("theorem_profile_check",
                                f"empty region on the {side} side (margin too large)")
        H = fld.values[sel][m] if isinstance(fld, ScalarField) else fld.evaluate_points(pts[m])
        sups[side] = float(np.max(np.abs(vals[m] - H)))
    return ProfileCheck(margin=float(margin), sup_plus=sups["plus"],
                        sup_minus=sups["minus"])


# ---------------------------------------------------------------------------
# radial branch table
# ---------------------------------------------------------------------------

@dataclass
class BranchRow:
    amplitude: float
    lam: float
    beta: float
    sup_u: float
    peak_radius: float
    mass: float
    scaled_mass: float

    def to_dict(self):
        return {k: getattr(self, k) for k in
                ("amplitude", "lam", "beta", "sup_u", "peak_radius",
                 "mass", "scaled_mass")}


@dataclass
class BranchReport:
    R1: float
    R2: float
    rows: list
    target_radius: float
    target_scaled_mass: float

    def tail_monotone(self, key, toward, tail=3):
        vals = [abs(getattr(r, key) - toward) for r in self.rows[-tail:]]
        return all(b <= a * (1 + 1e-9) for a, b in zip(vals, vals[1:]))

    def to_dict(self):
        return {"R1": self.R1, "R2": self.R2,
                "target_radius": self.target_radius,
                "target_scaled_mass": self.target_scaled_mass,
                "rows": [r.to_dict() for r in self.rows]}

    def table(self):
        hdr = f"{'amplitude':>10} {'lambda':>12} {'beta':>9} {'sup_u':>9} " \
              f"{'r_peak':>9} {'scaled_mass':>12}"
        lines = [hdr]
        for r in self.rows:
            lines.append(f"{r.amplitude:10.3f} {r.lam:12.4e} {r.beta:9.4f} "
                         f"{r.sup_u:9.4f} {r.peak_radius:9.6f} {r.scaled_mass:12.5f}")
        return "\n".join(lines)


def radial_maximal_branch_report(R1, R2, amplitudes, lam_bracket=(1e-12, 10.0)
                                 ) -> BranchReport:
    """Follow the radial blow-up branch by inner slope and report the drift of
    the peak radius toward sqrt(R1 R2) and of the beta-scaled mass toward
    8 pi / log(R1/R2)."""
    amps = list(amplitudes)
    if any(b <= a for a, b in zip(amps, amps[1:])):
        raise ConfigError("amplitudes must be strictly increasing")
    rows = []
    for d in amps:
        sol = radial_liouville_branch(R1, R2, d, lam_bracket=lam_bracket)
        beta = float(beta_of(sol.lam)) if sol.lam < 1.0 / (2 * np.sqrt(np.e)) \
            else float("nan")
        mass = sol.mass()
        rows.append(BranchRow(amplitude=float(d), lam=sol.lam, beta=beta,
                              sup_u=sol.sup_u, peak_radius=sol.peak_radius(),
                              mass=mass,
                              scaled_mass=mass / beta if np.isfinite(beta) else float("nan")))
    return BranchReport(R1=float(R1), R2=float(R2), rows=rows,
                        target_radius=float(np.sqrt(R1 * R2)),
                        target_scaled_mass=float(8 * np.pi / np.log(R1 / R2)))


# ---------------------------------------------------------------------------
# convergence studies
# ---------------------------------------------------------------------------

@dataclass
class ConvergenceReport:
    case: str
    resolutions: list
    errors: list
    orders: list

    def to_dict(self):
        return {"case": self.case, "resolutions": self.resolutions,
                "errors": self.errors, "orders": self.orders}

    def table(self):
        lines = [f"case: {self.case}", f"{'resolution':>12} {'error':>12} {'order':>8}"]
        for k, (res, err) in enumerate(zip(self.resolutions, self.errors)):
            o = "" if k == 0 else f"{self.orders[k - 1]:8.2f}"
            lines.append(f"{res:12.6g} {err:12.4e} {o:>8}")
        return "\n".join(lines)

    @property
    def min_tail_order(self):
        return min(self.orders) if self.orders else float("nan")


def _orders(resolutions, errors, floor=1e-12):
    orders = []
    for (h1, e1), (h2, e2) in zip(zip(resolutions, errors),
                                  zip(resolutions[1:], errors[1:])):
        if e1 < floor and e2 < floor:
            orders.append(float("inf"))
        else:
            orders.append(float(np.log(max(e1, floor) / max(e2, floor))
                                / np.log(h1 / h2)))
    return orders


def convergence_study(config) -> ConvergenceReport:
    """Errors and Richardson orders for a named oracle-backed case.

    Cases: ``annulus_harmonic_grid2d``, ``radial_laplace_ring``,
    ``radial_poisson_ring``, ``level_curve_circle``,
    ``liouville_mismatch_grid2d``."""
    case = config["case"]
    res = list(config["resolutions"])
    if len(res) < 3:
        raise ConfigError("a convergence study needs at least 3 resolutions")
    R1 = float(config.get("R1", 2.0))
    R2 = float(config.get("R2", 0.5))
    errors = []
    if case == "annulus_harmonic_grid2d":
        dom = build_domain({"kind": "annulus", "R1": R1, "R2": R2})
        for h in res:
            u = solve(EllipticProblem(domain=dom, operator="laplace",
                                      bcs={"outer": dirichlet(0.0),
                                           "hole": dirichlet(1.0)}), Grid2D(h=h))
            X, Y = u.meshgrid()
            rr = np.hypot(X, Y)
            exact = np.log(rr / R1) / np.log(R2 / R1)
            sel = u.defined
            errors.append(float(np.max(np.abs(u.values[sel] - exact[sel]))))
    elif case in ("radial_laplace_ring", "radial_poisson_ring"):
        dom = build_domain({"kind": "annulus", "R1": R1, "R2": R2})
        op = "laplace" if case == "radial_laplace_ring" else "poisson_unit"
        for n in res:
            u = solve(EllipticProblem(domain=dom, operator=op,
                                      bcs={"outer": dirichlet(0.0),
                                           "hole": dirichlet(1.0)}),
                      Radial1D(n=int(n)))
            if op == "laplace":
                exact = np.log(u.r / R1) / np.log(R2 / R1)
            else:
                # a + b log r + r^2/4 with u(R2)=1, u(R1)=0
                b = (1.0 - (R2 ** 2 - R1 ** 2) / 4.0) / np.log(R2 / R1)
                a = -b * np.log(R1) - R1 ** 2 / 4.0
                exact = a + b * np.log(u.r) + u.r ** 2 / 4.0
            errors.append(float(np.max(np.abs(u.values - exact))))
        res = [1.0 / n for n in res]   # orders measured against the spacing
    elif case == "level_curve_circle":
        dom = build_domain({"kind": "disc", "R1": 2.0})
        for h in res:
            fld = analytic_field(dom, h, lambda x, y: x ** 2 + y ** 2)
            curve = extract_level_curve(fld, 1.0)
            rr = np.hypot(curve.samples[:, 0], curve.samples[:, 1])
            errors.append(float(np.mean(np.abs(rr - 1.0))))
    elif case == "liouville_mismatch_grid2d":
        dom = build_domain({"kind": "annulus", "R1": R1, "R2": R2})
        for h in res:
            fb = liouville_free_boundary(dom, Grid2D(h=h))
            errors.append(fb.mismatch_sup)
    else:
        raise ConfigError(f"unknown convergence case {case!r}")
    return ConvergenceReport(case=case, resolutions=[float(r) for r in res],
                             errors=errors, orders=_orders(res, errors))
