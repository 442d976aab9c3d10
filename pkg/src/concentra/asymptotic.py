"""Matched-asymptotic approximate blow-up solutions.

The construction glues a one-dimensional exponential-layer profile across the
concentration curve onto scaled harmonic (or unit-source / chemotaxis) outer
fields.  The layer profile solves U'' + e^U = 0; the outer amplitude and the
layer width are tied together by the two constants a0 = 2 and b0 = log 2 of
the scaling

    beta = 2 log(1/(a0 lam)) + b0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .elliptic import EllipticProblem, Grid2D, Radial1D, dirichlet, normal_flux, solve
from .elliptic.problems import FluxProfile
from .elliptic.radial import RadialProfile
from .errors import ConfigError, NumericsError
from .fields import OUTSIDE, ScalarField
from .freeboundary import (KELLER_SEGEL, LIOUVILLE, MEANFIELD_BOUNDARY,
                           MEANFIELD_INTERIOR, FreeBoundarySolution)
from .geometry import FermiPatch

A0 = 2.0
B0 = float(np.log(2.0))
LAMBDA_MAX = float(1.0 / (A0 * np.sqrt(np.e)))   # admissibility bound for beta


def inner_profile(t):
    """Layer profile U(t) = log(2 sech^2 t) and its derivative.

    Evaluated through log1p so the tails are exact to round-off:
    U(t) = 3 log 2 - 2|t| - 2 log1p(e^{-2|t|}), U'(t) = -2 tanh t.
    """
    t = np.asarray(t, dtype=float)
    a = np.abs(t)
    U = 3.0 * B0 - 2.0 * a - 2.0 * np.log1p(np.exp(-2.0 * a))
    dU = -2.0 * np.tanh(t)
    if U.ndim == 0:
        return float(U), float(dU)
    return U, dU


def beta_of(lam):
    """Blow-up amplitude scale; positive and admissible for lam < 1/(2 sqrt(e))."""
    return 2.0 * np.log(1.0 / (A0 * lam)) + B0


@dataclass
class Potential:
    """Positive weight V in front of the exponential nonlinearity."""

    V: object = 1.0     # constant or callable of (x, y) arrays

    def on_xy(self, x, y):
        if callable(self.V):
            out = np.asarray(self.V(x, y), dtype=float)
        else:
            out = np.full(np.broadcast(np.asarray(x), np.asarray(y)).shape, float(self.V))
        if np.any(out <= 0):
            raise ConfigError("potential must be strictly positive")
        return out

    def on_points(self, pts):
        pts = np.atleast_2d(pts)
        return self.on_xy(pts[:, 0], pts[:, 1])

    def trace(self, curve):
        """h(s) = V restricted to the curve."""
        return self.on_points(curve.samples)


@dataclass
class ScalingParams:
    """All scaling data of the glued approximation for one lambda."""

    lam: float
    model: str
    beta: float
    mu: np.ndarray               # layer scale per curve sample
    s: np.ndarray                # arclength samples mu refers to
    rho: float = None            # mean-field multiplier (None for liouville)
    c_omega: float = None        # 1/|Omega| for the mean-field models
    nu: float = None             # boundary-layer scale (boundary-mass variant)
    delta: float = None          # asymptotic tube half-width M log(scale)/scale
    M: float = 20.0

    @property
    def a0(self):
        return A0

    @property
    def b0(self):
        return B0

    @property
    def outer_amplitude(self):
        """Factor multiplying the unit-trace outer field on gamma."""
        if self.model == LIOUVILLE:
            return self.beta + 2.0 * np.log(self.beta)
        return self.rho * self.c_omega

    @property
    def mass_scale(self):
        """Normalization of the concentrated-mass integral.

        For the mean-field models this is rho (the total-mass identity); for
        the blow-up model it is the effective outer amplitude
        beta + 2 log beta carried by the construction."""
        if self.model == LIOUVILLE:
            return self.beta + 2.0 * np.log(self.beta)
        return self.rho

    def mu_at(self, s):
        s_ext = np.concatenate([self.s, [self.s[-1] + (self.s[1] - self.s[0])]])
        m_ext = np.concatenate([self.mu, [self.mu[0]]])
        return np.interp(np.mod(s, s_ext[-1]), s_ext, m_ext)

    def to_dict(self):
        return {"lambda": self.lam, "model": self.model, "beta": self.beta,
                "rho": self.rho, "M": self.M, "delta": self.delta,
                "mu_stats": {"min": float(np.min(self.mu)),
                             "max": float(np.max(self.mu)),
                             "mean": float(np.mean(self.mu))}}


def scaling_params(lam, model, flux: FluxProfile, rho=None, domain_area=None,
                   M=20.0, boundary_flux=None) -> ScalingParams:
    """Layer scales from the one-sided normal flux on the free boundary.

    The flux must be strictly one-signed; its magnitude sets
    mu(s) = amplitude * |flux(s)| / (a0 lam) with amplitude beta + 2 log beta
    for the blow-up model and rho / |Omega| for the mean-field models."""
    lam = float(lam)
    if not (0 < lam < LAMBDA_MAX):
        raise ConfigError(f"lambda must lie in (0, {LAMBDA_MAX:.6f})")
    vmin, vmax = float(np.min(flux.values)), float(np.max(flux.values))
    if vmin * vmax <= 0:
        raise ConfigError("flux changes sign along the curve; layer scale undefined")
    beta = float(beta_of(lam))
    if model == LIOUVILLE:
        amp = beta + 2.0 * np.log(beta)
        mu = amp * np.abs(flux.values) / (A0 * lam)
        scale0 = beta
        rho_out, c_om, nu = None, None, None
    elif model in (MEANFIELD_INTERIOR, MEANFIELD_BOUNDARY):
        if domain_area is None:
            raise ConfigError("mean-field scaling needs the domain area")
        rho_out = float(rho) if rho is not None else beta
        c_om = 1.0 / float(domain_area)
        mu = rho_out * c_om * np.abs(flux.values) / (A0 * lam)
        scale0 = rho_out
        nu = None
        if model == MEANFIELD_BOUNDARY:
            if boundary_flux is None:
                raise ConfigError("boundary-mass scaling needs the boundary flux")
            nu = float(rho_out * c_om * np.mean(boundary_flux.values) / (A0 * lam))
            if nu <= 0:
                raise ConfigError("boundary flux must be positive for the half layer")
    else:
        raise ConfigError(f"no scaling rule for model {model!r}")
    if np.any(mu <= 0):
        raise ConfigError("layer scale must be positive")
    delta = M * np.log(scale0) / scale0 if scale0 > 1 else np.inf
    return ScalingParams(lam=lam, model=model, beta=beta, mu=mu,
                         s=flux.s.copy(), rho=rho_out, c_omega=c_om, nu=nu,
                         delta=float(delta), M=float(M))


# ---------------------------------------------------------------------------
# outer fields
# ---------------------------------------------------------------------------

@dataclass
class OuterFields:
    w0_plus: object
    w0_minus: object
    tilde_plus: object = None
    tilde_minus: object = None
    tilde_data: np.ndarray = None     # Dirichlet trace of the correction on gamma


def _combine(amplitude, base, tilde):
    if isinstance(base, RadialProfile):
        vals = amplitude * base.values + (tilde.values if tilde is not None else 0.0)
        return RadialProfile(r=base.r.copy(), values=vals, center=base.center,
                             coord=base.coord)
    vals = amplitude * base.values + (tilde.values if tilde is not None else 0.0)
    return ScalarField(origin=base.origin, h=base.h, nx=base.nx, ny=base.ny,
                       values=vals, mask=base.mask.copy(), cut_info=base.cut_info)


def build_outer(fb: FreeBoundarySolution, params: ScalingParams, pot: Potential,
                backend) -> OuterFields:
    """Scaled outer fields, with the log-flux correction for the blow-up model.

    The correction solves the side-wise harmonic problems with trace
    2 log|flux| - log h on gamma and zero on the domain boundary, so the
    outer normal derivatives match the layer slopes to leading order."""
    if params.model != LIOUVILLE:
        amp = params.outer_amplitude
        return OuterFields(w0_plus=_combine(amp, fb.field_plus, None),
                           w0_minus=_combine(amp, fb.field_minus, None))

    h_gam = pot.trace(fb.gamma)
    if np.any(np.abs(fb.flux_plus.values) < 1e-300) \
            or np.any(np.abs(fb.flux_minus.values) < 1e-300):
        raise NumericsError("build_outer", "flux vanishes on gamma; log data singular")
    data_plus = 2.0 * np.log(np.abs(fb.flux_plus.values)) - np.log(h_gam)
    data_minus = 2.0 * np.log(np.abs(fb.flux_minus.values)) - np.log(h_gam)

    gamma = fb.gamma

    def data_callable(values):
        def f(pts):
            _, sfoot, _, _ = gamma.project(np.atleast_2d(pts))
            s_ext = np.concatenate([gamma.s, [gamma.length]])
            v_ext = np.concatenate([values, [values[0]]])
            return np.interp(np.mod(sfoot, gamma.length), s_ext, v_ext)
        return f

    domain = _domain_of(fb, backend)
    tp = solve(EllipticProblem(domain=domain, operator="laplace",
                               bcs=_side_bcs(domain, "plus", data_callable(data_plus)),
                               gamma=gamma, side="plus"), backend)
    tm = solve(EllipticProblem(domain=domain, operator="laplace",
                               bcs=_side_bcs(domain, "minus", data_callable(data_minus)),
                               gamma=gamma, side="minus"), backend)
    amp = params.outer_amplitude
    return OuterFields(w0_plus=_combine(amp, fb.field_plus, tp),
                       w0_minus=_combine(amp, fb.field_minus, tm),
                       tilde_plus=tp, tilde_minus=tm,
                       tilde_data=np.vstack([data_plus, data_minus]))


def _side_bcs(domain, side, gamma_value):
    bcs = {"gamma": dirichlet(gamma_value)}
    if side == "plus":
        if domain.hole is not None:
            bcs["hole"] = dirichlet(0.0)
    else:
        bcs["outer"] = dirichlet(0.0)
    return bcs


def _domain_of(fb, backend):
    if fb.domain is None:
        raise ConfigError("free-boundary solution lacks its domain")
    return fb.domain


# ---------------------------------------------------------------------------
# inner layer and gluing
# ---------------------------------------------------------------------------

def smooth_cutoff(x):
    """C^2 cutoff: 1 below 1/2, 0 above 2, quintic ramp between."""
    x = np.asarray(x, dtype=float)
    s = np.clip((x - 0.5) / 1.5, 0.0, 1.0)
    return 1.0 - (6 * s ** 5 - 15 * s ** 4 + 10 * s ** 3)


@dataclass
class InnerLayer:
    """Layer field v0(s, t) = U(lam mu(s) t) + 2 log mu(s) - log h(s)."""

    params: ScalingParams
    h_gamma: np.ndarray
    s: np.ndarray

    def h_at(self, s):
        s_ext = np.concatenate([self.s, [self.s[-1] + (self.s[1] - self.s[0])]])
        h_ext = np.concatenate([self.h_gamma, [self.h_gamma[0]]])
        return np.interp(np.mod(s, s_ext[-1]), s_ext, h_ext)

    def evaluate(self, s, t):
        mu = self.params.mu_at(s)
        h = self.h_at(s)
        U, _ = inner_profile(self.params.lam * mu * np.asarray(t, dtype=float))
        return U + 2.0 * np.log(mu) - np.log(h)


def build_inner(patch: FermiPatch, params: ScalingParams, pot: Potential) -> InnerLayer:
    """Inner layer bound to a Fermi patch; evaluation is analytic in (s, t)."""
    h_gamma = pot.trace(patch.base)
    if len(params.mu) != patch.base.n:
        # resample mu onto the patch curve
        mu = params.mu_at(patch.base.s)
        params = ScalingParams(lam=params.lam, model=params.model, beta=params.beta,
                               mu=mu, s=patch.base.s.copy(), rho=params.rho,
                               c_omega=params.c_omega, nu=params.nu,
                               delta=params.delta, M=params.M)
    return InnerLayer(params=params, h_gamma=h_gamma, s=patch.base.s.copy())


@dataclass
class ApproxSolution:
    """Glued approximate solution with all diagnostic components retained."""

    model: str
    params: ScalingParams
    fb: FreeBoundarySolution
    patch: FermiPatch
    inner: InnerLayer
    outer: OuterFields
    glued: object                  # RadialProfile or ScalarField
    blend_delta: float             # effective half-width of the plateau scale
    alpha_layer: dict = None       # boundary-mass variant bookkeeping

    def manifest(self):
        out = {"lambda": self.params.lam, "beta": self.params.beta,
               "M": self.params.M, "delta": self.params.delta,
               "blend_delta": self.blend_delta,
               "mu_stats": self.params.to_dict()["mu_stats"]}
        if self.params.rho is not None:
            out["rho"] = self.params.rho
        return out

    def manifest_json(self, **kw):
        return json.dumps(self.manifest(), sort_keys=True, **kw)


def assemble(fb: FreeBoundarySolution, params: ScalingParams, pot: Potential,
             backend, outer: OuterFields = None) -> ApproxSolution:
    """Glue the layer onto the outer fields across the concentration curve.

    The glued field equals the layer below |t| = delta/2, the outer field
    above |t| = 2 delta, and blends with a smooth convex cutoff between.
    The blend half-width is the asymptotic value M log(scale)/scale capped
    at half the geometric tube radius; the assembly fails when even the
    capped width cannot hold one layer width."""
    domain = _domain_of(fb, backend)
    if outer is None:
        outer = build_outer(fb, params, pot, backend)
    kap = np.max(np.abs(fb.gamma.curvature()))
    _, _, d_out, _ = domain.outer.project(fb.gamma.samples)
    clear = float(np.min(d_out))
    if domain.hole is not None:
        _, _, d_h, _ = domain.hole.project(fb.gamma.samples)
        clear = min(clear, float(np.min(d_h)))
    tube = min((0.8 / kap) if kap > 0 else np.inf, 0.95 * clear)
    patch = FermiPatch(fb.gamma, tube_radius=tube)
    delta_eff = min(params.delta, 0.5 * patch.delta)
    lam_mu_min = params.lam * float(np.min(params.mu))
    if lam_mu_min * delta_eff < 0.5:
        raise NumericsError("assemble",
                            f"blend width {delta_eff:.3g} cannot hold the layer "
                            f"(lambda too large for this curve)")
    inner = build_inner(patch, params, pot)

    if isinstance(outer.w0_plus, RadialProfile):
        glued, alpha = _assemble_radial(domain, fb, params, inner, outer, delta_eff)
    else:
        glued, alpha = _assemble_grid(domain, fb, params, inner, outer, patch,
                                      delta_eff)
    return ApproxSolution(model=params.model, params=params, fb=fb, patch=patch,
                          inner=inner, outer=outer, glued=glued,
                          blend_delta=float(delta_eff), alpha_layer=alpha)


def _alpha_layer_radial(domain, params, r):
    """Boundary half-layer exponent samples for the boundary-mass variant."""
    R1 = domain.R1
    tau = R1 - r                     # inward distance from the outer boundary
    U, _ = inner_profile(params.lam * params.nu * tau)
    return U + 2.0 * np.log(params.nu)


def _assemble_radial(domain, fb, params, inner, outer, delta_eff):
    wp, wm = outer.w0_plus, outer.w0_minus
    R = wp.r[-1] if abs(wp.r[-1] - wm.r[0]) < 1e-9 else wm.r[0]
    r_lo = wp.r[0]
    r_hi = wm.r[-1]
    n_tot = 8192
    if r_lo > 0:
        r = np.exp(np.linspace(np.log(r_lo), np.log(r_hi), n_tot))
        coord = "log"
    else:
        r = np.linspace(r_lo, r_hi, n_tot)
        coord = "r"
    t = R - r                        # positive on the plus (inner) side
    v0 = inner.evaluate(np.zeros_like(r), t)
    w0 = np.where(r <= R, np.interp(np.minimum(r, R), wp.r, wp.values),
                  np.interp(np.maximum(r, R), wm.r, wm.values))
    chi = smooth_cutoff(np.abs(t) / delta_eff)
    glued = chi * v0 + (1.0 - chi) * w0
    alpha = None
    if params.model == MEANFIELD_BOUNDARY:
        if params.nu is None:
            raise ConfigError("boundary-mass assembly needs the nu scale")
        tau = domain.R1 - r
        va = _alpha_layer_radial(domain, params, r)
        rho_scale = params.rho
        delta_a = min(params.M * np.log(rho_scale) / rho_scale, 0.45 * (domain.R1 - R))
        chia = smooth_cutoff(tau / delta_a)
        glued = chia * va + (1.0 - chia) * glued
        alpha = {"delta": float(delta_a), "nu": params.nu}
    return RadialProfile(r=r, values=glued, center=domain.center, coord=coord), alpha


def _assemble_grid(domain, fb, params, inner, outer, patch, delta_eff):
    wp, wm = outer.w0_plus, outer.w0_minus
    nx, ny = wp.nx, wp.ny
    vals = np.where(wp.mask >= 0, wp.values, 0.0) + np.where(wm.mask >= 0, wm.values, 0.0)
    mask = np.where(wp.mask >= 0, wp.mask, wm.mask)
    both = (wp.mask >= 0) & (wm.mask >= 0)
    if np.any(both):
        raise NumericsError("assemble", "outer side fields overlap")
    fldw = ScalarField(origin=wp.origin, h=wp.h, nx=nx, ny=ny,
                       values=np.where(mask >= 0, vals, np.nan), mask=mask)
    X, Y = fldw.meshgrid()
    defined = fldw.defined
    pts = np.column_stack([X[defined], Y[defined]])
    s, t = patch.inverse(pts, clip=True)
    in_tube = np.abs(t) <= min(2.0 * delta_eff, patch.delta)
    glued_vals = fldw.values.copy()
    if np.any(in_tube):
        v0 = inner.evaluate(s[in_tube], t[in_tube])
        chi = smooth_cutoff(np.abs(t[in_tube]) / delta_eff)
        sel_idx = np.where(defined.ravel())[0][in_tube]
        flat = glued_vals.ravel()
        flat[sel_idx] = chi * v0 + (1.0 - chi) * flat[sel_idx]
        glued_vals = flat.reshape(nx, ny)
    alpha = None
    if params.model == MEANFIELD_BOUNDARY:
        # one-sided layer along the outer boundary
        foot = domain.outer.project(pts)[0]
        tau = np.hypot(pts[:, 0] - foot[:, 0], pts[:, 1] - foot[:, 1])
        rho_scale = params.rho
        delta_a = min(params.M * np.log(rho_scale) / rho_scale,
                      0.45 * _gap(domain, fb))
        Ua, _ = inner_profile(params.lam * params.nu * tau)
        va = Ua + 2.0 * np.log(params.nu)
        chia = smooth_cutoff(tau / delta_a)
        flat = glued_vals.ravel()
        sel_idx = np.where(defined.ravel())[0]
        flat[sel_idx] = chia * va + (1.0 - chia) * flat[sel_idx]
        glued_vals = flat.reshape(nx, ny)
        alpha = {"delta": float(delta_a), "nu": params.nu}
    out = ScalarField(origin=wp.origin, h=wp.h, nx=nx, ny=ny,
                      values=glued_vals, mask=mask)
    return out, alpha


def _gap(domain, fb):
    _, _, d, _ = domain.outer.project(fb.gamma.samples)
    return float(np.min(d))


# ---------------------------------------------------------------------------
# matching residuals
# ---------------------------------------------------------------------------

@dataclass
class MatchingReport:
    r_val_plus: np.ndarray
    r_val_minus: np.ndarray
    r_der_plus: np.ndarray
    r_der_minus: np.ndarray
    closed_form: float = None

    @property
    def r_val_sup(self):
        return float(max(np.max(np.abs(self.r_val_plus)),
                         np.max(np.abs(self.r_val_minus))))

    @property
    def r_der_sup(self):
        return float(max(np.max(np.abs(self.r_der_plus)),
                         np.max(np.abs(self.r_der_minus))))

    def closed_form_deviation(self):
        if self.closed_form is None:
            return None
        return float(max(np.max(np.abs(self.r_val_plus - self.closed_form)),
                         np.max(np.abs(self.r_val_minus - self.closed_form))))

    def to_dict(self):
        d = {"r_val_sup": self.r_val_sup, "r_der_sup": self.r_der_sup}
        if self.closed_form is not None:
            d["closed_form"] = self.closed_form
            d["closed_form_deviation"] = self.closed_form_deviation()
        return d


def matching_value_closed_form(beta):
    """Exact overlap value error of the construction, -2 log(1 + 2 log(beta)/beta)."""
    return float(-2.0 * np.log1p(2.0 * np.log(beta) / beta))


def matching_residuals(approx: ApproxSolution, fb: FreeBoundarySolution = None
                       ) -> MatchingReport:
    """Value and slope mismatch between the outer fields and the layer tails.

    The value residual w0|_gamma - b0 - 2 log mu + log h equals
    -2 log(1 + 2 log beta / beta) identically for the blow-up model; the
    slope residual d_n w0 -+ a0 lam mu - d_n(correction) vanishes up to
    flux-extraction error."""
    fb = fb or approx.fb
    params = approx.params
    gamma = fb.gamma
    s = gamma.s
    mu = params.mu_at(s)
    h = approx.inner.h_at(s)
    amp = params.outer_amplitude

    if params.model == LIOUVILLE:
        data_p = approx.outer.tilde_data[0]
        data_m = approx.outer.tilde_data[1]
    else:
        data_p = np.zeros(gamma.n)
        data_m = np.zeros(gamma.n)
    trace_p = amp * 1.0 + data_p
    trace_m = amp * 1.0 + data_m
    r_val_p = trace_p - B0 - 2.0 * np.log(mu) + np.log(h)
    r_val_m = trace_m - B0 - 2.0 * np.log(mu) + np.log(h)

    # slope residuals from the fields themselves
    fw_p = normal_flux(approx.outer.w0_plus, gamma, "plus", boundary_value=trace_p)
    fw_m = normal_flux(approx.outer.w0_minus, gamma, "minus", boundary_value=trace_m)
    a0lm = A0 * params.lam * mu
    if params.model == LIOUVILLE:
        ft_p = normal_flux(approx.outer.tilde_plus, gamma, "plus", boundary_value=data_p)
        ft_m = normal_flux(approx.outer.tilde_minus, gamma, "minus", boundary_value=data_m)
        r_der_p = fw_p.values + a0lm - ft_p.values
        r_der_m = fw_m.values - a0lm - ft_m.values
    else:
        r_der_p = fw_p.values + a0lm
        r_der_m = fw_m.values - a0lm

    cf = matching_value_closed_form(params.beta) if params.model == LIOUVILLE else None
    return MatchingReport(r_val_plus=r_val_p, r_val_minus=r_val_m,
                          r_der_plus=r_der_p, r_der_minus=r_der_m,
                          closed_form=cf)
