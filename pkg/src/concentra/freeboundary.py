"""Concentration-curve solvers: harmonic level-set construction, conformal
modulus via capacity, and a flux-balance normal-flow iteration for the
mean-field and chemotaxis models."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .elliptic import (EllipticProblem, FluxProfile, Grid2D, Radial1D,
                       dirichlet, dirichlet_energy, h1_energy, neumann,
                       normal_flux, solve)
from .elliptic.radial import RadialProfile
from .errors import ConfigError, NumericsError
from .fields import OUTSIDE, PLUS, ScalarField
from .geometry import ClosedCurve, Domain2D, _is_simple, circle, \
    extract_level_curve, region_areas

LIOUVILLE = "liouville"
MEANFIELD_INTERIOR = "meanfield_interior"
MEANFIELD_BOUNDARY = "meanfield_boundary"
KELLER_SEGEL = "keller_segel"
MODELS = (LIOUVILLE, MEANFIELD_INTERIOR, MEANFIELD_BOUNDARY, KELLER_SEGEL)

# Normal-velocity orientation per model, frozen after validation against the
# disc closed forms: the mean-field mismatch is positive when the trial
# circle is too small while the chemotaxis mismatch is negative there.
_FLOW_SIGN = {MEANFIELD_INTERIOR: -1.0, MEANFIELD_BOUNDARY: -1.0, KELLER_SEGEL: 1.0}


@dataclass
class ModulusReport:
    """Capacity of the 0/1 potential and the induced conformal-annulus data."""

    capacity: float
    log_ratio: float          # plays log(R1/R2) of the equivalent annulus
    mass_prediction: float    # 8 pi / log_ratio, equal to 4 * capacity

    def to_dict(self):
        return {"capacity": self.capacity, "log_ratio": self.log_ratio,
                "mass_prediction": self.mass_prediction}


@dataclass
class FreeBoundarySolution:
    model: str
    gamma: ClosedCurve
    field_plus: object
    field_minus: object
    flux_plus: FluxProfile
    flux_minus: FluxProfile
    mismatch_sup: float
    areas: tuple
    boundary_flux: FluxProfile = None
    iterations: int = 0
    history: list = field(default_factory=list)
    field_whole: object = None
    domain: Domain2D = None
    mismatch_sup_smooth: float = None   # stopping quantity of the flux flow

    def radius_stats(self, center=(0.0, 0.0)):
        d = np.hypot(self.gamma.samples[:, 0] - center[0],
                     self.gamma.samples[:, 1] - center[1])
        return float(np.mean(d)), float(np.std(d))

    def to_dict(self):
        return {
            "model": self.model,
            "gamma": {
                "s": [float(v) for v in self.gamma.s],
                "x": [float(v) for v in self.gamma.samples[:, 0]],
                "y": [float(v) for v in self.gamma.samples[:, 1]],
                "nx": [float(v) for v in self.gamma.normals[:, 0]],
                "ny": [float(v) for v in self.gamma.normals[:, 1]],
            },
            "mismatch_sup": self.mismatch_sup,
            "areas": {"plus": self.areas[0], "minus": self.areas[1]},
            "iterations": self.iterations,
            "mismatch_history": [float(v) for v in self.history],
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), sort_keys=True, **kw)


def _restrict(u: ScalarField, transform, side_code):
    vals = transform(u.values)
    mask = np.where(u.mask == side_code, side_code, OUTSIDE).astype(np.int8)
    vals = np.where(mask >= 0, vals, np.nan)
    return ScalarField(origin=u.origin, h=u.h, nx=u.nx, ny=u.ny,
                       values=vals, mask=mask, cut_info=u.cut_info)


def liouville_free_boundary(domain: Domain2D, backend) -> FreeBoundarySolution:
    """Free boundary of the whole-domain blow-up model via one harmonic solve.

    The potential with value 0 on the outer boundary and 2 on the hole is
    harmonic across its middle level set, so gamma = {u = 1} satisfies the
    two-sided flux balance; the harmonic measure restrictions are
    H_plus = 2 - u on the hole side and H_minus = u on the outer side.
    """
    if not domain.doubly_connected:
        raise ConfigError("the level-set construction needs a doubly connected domain")
    prob = EllipticProblem(domain=domain, operator="laplace",
                           bcs={"outer": dirichlet(0.0), "hole": dirichlet(2.0)})
    u = solve(prob, backend)
    gamma = extract_level_curve(u, 1.0)
    areas = region_areas(domain, gamma)

    if isinstance(u, RadialProfile):
        hp = solve(EllipticProblem(domain=domain, operator="laplace",
                                   bcs={"hole": dirichlet(0.0), "gamma": dirichlet(1.0)},
                                   gamma=gamma, side="plus"), backend)
        hm = solve(EllipticProblem(domain=domain, operator="laplace",
                                   bcs={"outer": dirichlet(0.0), "gamma": dirichlet(1.0)},
                                   gamma=gamma, side="minus"), backend)
        flux_plus = normal_flux(hp, gamma, "plus")
        flux_minus = normal_flux(hm, gamma, "minus")
        field_plus, field_minus = hp, hm
    else:
        # one-sided fluxes of the restrictions; interpolation may use the
        # whole field since u is continuous across gamma and
        # H_plus = 2 - u, H_minus = u there
        fu_plus = normal_flux(u, gamma, "plus", boundary_value=1.0)
        fu_minus = normal_flux(u, gamma, "minus", boundary_value=1.0)
        flux_plus = FluxProfile(s=fu_plus.s, values=-fu_plus.values, side="plus")
        flux_minus = fu_minus
        field_plus = _restrict(u, lambda v: 2.0 - v, PLUS)
        field_minus = _restrict(u, lambda v: v, 0)

    mism = flux_plus.values + flux_minus.values
    return FreeBoundarySolution(model=LIOUVILLE, gamma=gamma,
                                field_plus=field_plus, field_minus=field_minus,
                                flux_plus=flux_plus, flux_minus=flux_minus,
                                mismatch_sup=float(np.max(np.abs(mism))),
                                areas=areas, field_whole=u, domain=domain)


def conformal_modulus(domain: Domain2D, backend) -> ModulusReport:
    """Modulus of the equivalent annulus from the capacity of the 0/1
    potential; only log(R1/R2) = 2 pi / capacity enters the mass formula."""
    if not domain.doubly_connected:
        raise ConfigError("conformal modulus needs a doubly connected domain")
    prob = EllipticProblem(domain=domain, operator="laplace",
                           bcs={"outer": dirichlet(0.0), "hole": dirichlet(1.0)})
    u = solve(prob, backend)
    cap = dirichlet_energy(u)
    if cap <= 0:
        raise NumericsError("conformal_modulus", "non-positive capacity")
    log_ratio = 2.0 * np.pi / cap
    return ModulusReport(capacity=float(cap), log_ratio=float(log_ratio),
                         mass_prediction=float(4.0 * cap))


# ---------------------------------------------------------------------------
# flux-balance normal flow
# ---------------------------------------------------------------------------

@dataclass
class FlowControls:
    tol_rel: float = 1e-3          # stop when sup|g| < tol_rel * sup|flux_plus|
    tol_abs: float = None          # absolute override
    max_iter: int = 200
    step_fraction: float = 0.2     # first step: fraction of diameter / sup|g0|
    divergence_factor: float = 10.0
    resample_n: int = None         # defaults to the init curve sample count
    velocity_modes: int = 8        # low-pass cutoff for the normal velocity
    curve_modes: int = 16          # low-pass cutoff for the curve positions


def _lowpass_closed(values, k_cut):
    """Keep Fourier modes |k| <= k_cut of a closed uniformly sampled profile.

    Explicit normal stepping is stiff in the high curve modes (their flux
    response grows with the mode number), so the velocity is filtered; the
    mean mode is untouched and radially symmetric data passes unchanged."""
    n = len(values)
    if k_cut is None or k_cut <= 0 or k_cut >= n // 2:
        return values
    F = np.fft.rfft(values)
    F[k_cut + 1:] = 0.0
    return np.fft.irfft(F, n=n)


def _mode_damped_displacement(g, tau, sigma):
    """Displacement with per-mode steps tau_k = tau / (1 + tau sigma k).

    The flux response to a mode-k shape perturbation grows like sigma k, so
    the plain explicit step is unstable in the higher modes at the step size
    the mean motion wants; the semi-implicit factor keeps every retained mode
    contractive while the mean (k = 0) advances with the full step."""
    n = len(g)
    F = np.fft.rfft(g)
    k = np.arange(len(F))
    F *= tau / (1.0 + tau * sigma * k)
    return np.fft.irfft(F, n=n)


def _side_problems(domain, model, gamma):
    outer_bc = {"outer": neumann()}
    hole_bc = {"hole": neumann()} if domain.hole is not None else {}
    if model in (MEANFIELD_INTERIOR, MEANFIELD_BOUNDARY):
        op = "poisson_unit"
    elif model == KELLER_SEGEL:
        op = "modified_helmholtz"
    else:
        raise ConfigError(f"flux flow does not apply to model {model!r}")
    plus = EllipticProblem(domain=domain, operator=op,
                           bcs={**hole_bc, "gamma": dirichlet(1.0)},
                           gamma=gamma, side="plus")
    minus_bcs = {**outer_bc, "gamma": dirichlet(1.0)}
    if model == MEANFIELD_BOUNDARY:
        minus_bcs["outer"] = dirichlet(1.0)
    minus = EllipticProblem(domain=domain, operator=op, bcs=minus_bcs,
                            gamma=gamma, side="minus")
    return plus, minus


def _solve_sides(domain, model, gamma, backend):
    pp, pm = _side_problems(domain, model, gamma)
    up = solve(pp, backend)
    um = solve(pm, backend)
    fp = normal_flux(up, gamma, "plus", boundary_value=1.0)
    fm = normal_flux(um, gamma, "minus", boundary_value=1.0)
    return up, um, fp, fm


def _local_clearance(domain, curve):
    _, _, d_out, _ = domain.outer.project(curve.samples)
    clear = d_out
    if domain.hole is not None:
        _, _, d_hole, _ = domain.hole.project(curve.samples)
        clear = np.minimum(clear, d_hole)
    kap = np.max(np.abs(curve.curvature()))
    return min(float(np.min(clear)), (0.5 / kap) if kap > 0 else np.inf)


def default_initial_curve(domain: Domain2D, n=512):
    """Concentric trial curve enclosing half the domain area."""
    hole_area = abs(domain.hole.enclosed_area()) if domain.hole is not None else 0.0
    target = 0.5 * domain.area() + hole_area
    outer_area = abs(domain.outer.enclosed_area())
    f = np.sqrt(target / outer_area)
    c = domain.outer.samples.mean(axis=0)
    pts = c + f * (domain.outer.samples - c)
    return ClosedCurve(pts[::max(1, len(pts) // n)], plus_is_bounded=True)


def flux_flow_free_boundary(domain: Domain2D, model: str, init: ClosedCurve,
                            backend, controls: FlowControls = None
                            ) -> FreeBoundarySolution:
    """Drive a trial curve by the two-sided flux mismatch until balance.

    Each step solves the model's two side problems with value 1 on the
    current curve, forms g = flux_plus + flux_minus and moves the curve
    along its normal with a per-model orientation frozen against the disc
    closed forms; steps that increase the mismatch are rejected and retried
    with half the step.
    """
    if model not in _FLOW_SIGN:
        raise ConfigError(f"flux flow supports {sorted(_FLOW_SIGN)}, not {model!r}")
    controls = controls or FlowControls()
    if init is None:
        init = default_initial_curve(domain)
    if not np.all(domain.contains(init.samples)):
        raise ConfigError("initial curve must lie strictly inside the domain")
    n_res = controls.resample_n or init.n
    sign = _FLOW_SIGN[model]

    gamma = init
    up, um, fp, fm = _solve_sides(domain, model, gamma, backend)
    g_raw = fp.values + fm.values
    g = _lowpass_closed(g_raw, controls.velocity_modes)
    sup_g = float(np.max(np.abs(g)))
    best = sup_g
    history = [sup_g]
    tol = controls.tol_abs if controls.tol_abs is not None \
        else controls.tol_rel * fp.sup
    tau = controls.step_fraction * domain.diameter() / max(sup_g, 1e-300)
    tau_secant = None     # 1/|slope| of the mean mismatch, once observed
    iterations = 0

    while sup_g > tol and iterations < controls.max_iter:
        # cap the displacement at half the local tube radius
        clearance = _local_clearance(domain, gamma)
        max_move = 0.5 * clearance
        tau_eff = tau if tau_secant is None else min(tau, tau_secant)
        if tau_eff * sup_g > max_move:
            tau_eff = max_move / sup_g
        # stiffness scale of the shape modes: flux response ~ sigma k
        sigma = (fp.sup + fm.sup) / (gamma.length / (2 * np.pi))
        disp = _mode_damped_displacement(g, tau_eff, sigma)
        moved = gamma.samples + sign * disp[:, None] * gamma.normals
        try:
            cand = ClosedCurve(moved, plus_is_bounded=gamma.plus_is_bounded)
            pts = cand.point_at(np.linspace(0, cand.length, n_res, endpoint=False))
            # spectral filtering of the positions suppresses the stiff high
            # curve modes without the radius bias of averaging filters
            pts = np.column_stack([_lowpass_closed(pts[:, 0], controls.curve_modes),
                                   _lowpass_closed(pts[:, 1], controls.curve_modes)])
            cand = ClosedCurve(pts, plus_is_bounded=gamma.plus_is_bounded)
            if not np.all(domain.contains(cand.samples)):
                raise NumericsError("flux_flow", "curve exited the domain")
            upc, umc, fpc, fmc = _solve_sides(domain, model, cand, backend)
        except (NumericsError, ConfigError):
            tau *= 0.5
            tau_secant = None
            iterations += 1
            if tau * sup_g < 1e-15 * domain.diameter():
                raise
            continue
        gc_raw = fpc.values + fmc.values
        gc = _lowpass_closed(gc_raw, controls.velocity_modes)
        sup_c = float(np.max(np.abs(gc)))
        # secant estimate of the mean-mode slope sets the next step size
        mean_disp = sign * float(np.mean(disp))
        dmean = float(np.mean(gc) - np.mean(g))
        if abs(mean_disp) > 1e-14 * domain.diameter() and abs(dmean) > 0:
            slope = dmean / mean_disp
            if abs(slope) > 1e-12:
                tau_secant = 0.9 / abs(slope)
        # accept noise-level regressions so the step does not collapse at the
        # discretization floor of the extracted fluxes
        if sup_c <= max(best * 1.05, best + 0.5 * tol) or sup_c <= sup_g:
            gamma, up, um, fp, fm = cand, upc, umc, fpc, fmc
            g_raw, g, sup_g = gc_raw, gc, sup_c
            best = min(best, sup_c)
            history.append(sup_g)
        else:
            tau *= 0.5
            history.append(sup_g)
            if sup_c > controls.divergence_factor * best:
                raise NumericsError("flux_flow",
                                    f"iteration diverged (mismatch {sup_c:.3e} "
                                    f"vs best {best:.3e})")
        iterations += 1

    if sup_g > tol:
        raise NumericsError("flux_flow",
                            f"no convergence in {controls.max_iter} iterations "
                            f"(mismatch {sup_g:.3e}, tol {tol:.3e})")

    boundary_flux = None
    if model == MEANFIELD_BOUNDARY:
        boundary_flux = normal_flux(um, domain.outer, "minus", boundary_value=1.0)
    areas = region_areas(domain, gamma)
    return FreeBoundarySolution(model=model, gamma=gamma,
                                field_plus=up, field_minus=um,
                                flux_plus=fp, flux_minus=fm,
                                mismatch_sup=float(np.max(np.abs(g_raw))),
                                mismatch_sup_smooth=sup_g, areas=areas,
                                boundary_flux=boundary_flux,
                                iterations=iterations, history=history,
                                domain=domain)


def flux_mismatch(sol: FreeBoundarySolution):
    """Pointwise two-sided flux sum with its sup and L2 norms."""
    if len(sol.flux_plus.values) != len(sol.flux_minus.values):
        raise ConfigError("flux profiles have different sample counts")
    vals = sol.flux_plus.values + sol.flux_minus.values
    prof = FluxProfile(s=sol.flux_plus.s.copy(), values=vals, side="sum")
    return prof, prof.sup, prof.l2(length=sol.gamma.length)


def ks_partition_energy(domain: Domain2D, gamma: ClosedCurve, backend) -> float:
    """H1 energy of the two-sided chemotaxis field with value 1 on gamma."""
    if not np.all(domain.contains(gamma.samples)):
        raise ConfigError("gamma exits the domain")
    pp, pm = _side_problems(domain, KELLER_SEGEL, gamma)
    up = solve(pp, backend)
    um = solve(pm, backend)
    return float(h1_energy(up) + h1_energy(um))
