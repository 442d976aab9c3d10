"""Normal-derivative extraction and energy quadratures for solved fields."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, NumericsError
from ..fields import ScalarField
from .problems import FluxProfile
from .radial import RadialProfile


def _strict_interp(fld: ScalarField, pts):
    """Bilinear interpolation; ok flags False where any cell corner is
    undefined or the point leaves the grid."""
    pts = np.atleast_2d(pts)
    fx = (pts[:, 0] - fld.origin[0]) / fld.h
    fy = (pts[:, 1] - fld.origin[1]) / fld.h
    i0 = np.floor(fx).astype(int)
    j0 = np.floor(fy).astype(int)
    inb = (i0 >= 0) & (i0 < fld.nx - 1) & (j0 >= 0) & (j0 < fld.ny - 1)
    i0c = np.clip(i0, 0, fld.nx - 2)
    j0c = np.clip(j0, 0, fld.ny - 2)
    ax = fx - i0c
    ay = fy - j0c
    vals = np.zeros(len(pts))
    ok = inb.copy()
    for di, dj, w in ((0, 0, (1 - ax) * (1 - ay)), (1, 0, ax * (1 - ay)),
                      (0, 1, (1 - ax) * ay), (1, 1, ax * ay)):
        v = fld.values[i0c + di, j0c + dj]
        ok &= fld.mask[i0c + di, j0c + dj] >= 0
        vals += w * np.where(np.isfinite(v), v, 0.0)
    return vals, ok


def _boundary_values(curve, boundary_value, fld=None):
    if boundary_value is None:
        if fld is None:
            raise ConfigError("normal_flux needs a boundary value for this field type")
        vals, ok = _strict_interp(fld, curve.samples)
        if not np.all(ok):
            raise NumericsError("normal_flux",
                                "cannot infer boundary values; pass them explicitly")
        return vals
    if callable(boundary_value):
        return np.asarray(boundary_value(curve.samples), dtype=float)
    arr = np.asarray(boundary_value, dtype=float)
    if arr.ndim == 0:
        return np.full(curve.n, float(arr))
    if len(arr) != curve.n:
        raise ConfigError("boundary value array length does not match the curve")
    return arr


def normal_flux(field, curve, side, boundary_value=None):
    """One-sided second-order normal derivative of the field along the curve.

    ``side`` names the side of the curve the field lives on: "plus" is the
    side the stored normals point into.  The returned values are d u / d n
    with n the curve's stored normal, so the two-sided free boundary balance
    reads flux_plus + flux_minus = 0.
    """
    if side not in ("plus", "minus"):
        raise ConfigError("side must be 'plus' or 'minus'")
    if isinstance(field, RadialProfile):
        return _radial_flux(field, curve, side)
    if not isinstance(field, ScalarField):
        raise ConfigError(f"unsupported field type {type(field).__name__}")

    u0 = _boundary_values(curve, boundary_value, fld=field)
    sgn = 1.0 if side == "plus" else -1.0
    h = field.h
    n = curve.normals
    pts = curve.samples
    out = np.full(curve.n, np.nan)
    done = np.zeros(curve.n, dtype=bool)
    for mult in (1.0, 2.0, 3.0):
        a, bb = mult * h, 2.0 * mult * h
        p1 = pts + sgn * a * n
        p2 = pts + sgn * bb * n
        v1, ok1 = _strict_interp(field, p1)
        v2, ok2 = _strict_interp(field, p2)
        ok = ok1 & ok2 & ~done
        # derivative along the sampling direction, then along n
        d = (-(a + bb) / (a * bb)) * u0[ok] \
            + (bb / (a * (bb - a))) * v1[ok] \
            - (a / (bb * (bb - a))) * v2[ok]
        out[ok] = sgn * d
        done |= ok
        if np.all(done):
            break
    if not np.all(done):
        # permissive fallback: average of defined corners at the widest rung
        p1 = pts + sgn * 2 * h * n
        p2 = pts + sgn * 4 * h * n
        v1 = field.interpolate(p1)
        v2 = field.interpolate(p2)
        a, bb = 2 * h, 4 * h
        d = (-(a + bb) / (a * bb)) * u0 + (bb / (a * (bb - a))) * v1 \
            - (a / (bb * (bb - a))) * v2
        rest = ~done & np.isfinite(d)
        out[rest] = sgn * d[rest]
        done |= rest
    if not np.all(done):
        raise NumericsError("normal_flux", "tube too thin for the flux stencil")
    return FluxProfile(s=curve.s.copy(), values=out, side=side)


def _radial_flux(profile: RadialProfile, curve, side):
    c = profile.center
    d = np.hypot(curve.samples[:, 0] - c[0], curve.samples[:, 1] - c[1])
    R = float(np.mean(d))
    # which endpoint of the radial interval the curve sits on
    if abs(R - profile.r[0]) <= abs(R - profile.r[-1]):
        which, r_end = "lo", profile.r[0]
    else:
        which, r_end = "hi", profile.r[-1]
    if abs(R - r_end) > 1e-6 * max(R, 1.0):
        raise ConfigError("curve radius does not match the radial field interval")
    du_dr = profile.du_dr_end(which)
    # orientation of the stored normal relative to the radial direction
    v0 = curve.samples[0] - np.asarray(c)
    v0 = v0 / np.hypot(*v0)
    n_dot_r = float(np.dot(curve.normals[0], v0))
    return FluxProfile(s=curve.s.copy(),
                       values=np.full(curve.n, n_dot_r * du_dr), side=side)


def dirichlet_energy(field):
    """Midpoint-quadrature value of the Dirichlet integral of the field."""
    if isinstance(field, RadialProfile):
        return field.dirichlet_energy()
    if isinstance(field, ScalarField):
        return field.integrate(field.gradient_squared())
    raise ConfigError(f"unsupported field type {type(field).__name__}")


def h1_energy(field):
    """Dirichlet energy plus the L2 mass of the field over its region."""
    if isinstance(field, RadialProfile):
        return field.h1_norm_sq()
    if isinstance(field, ScalarField):
        vals = np.where(field.defined, field.values, 0.0)
        return field.integrate(field.gradient_squared() + vals ** 2)
    raise ConfigError(f"unsupported field type {type(field).__name__}")
