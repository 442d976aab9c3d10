"""Radial shooting solver for the blow-up branch of Delta u + lam^2 e^u = 0
on an annulus, parametrized by the inner slope to avoid the fold of the
(lam, sup u) diagram."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from ..errors import ConfigError, NumericsError

_U_OVERFLOW = 660.0  # exp stays finite in float64 with margin


@dataclass
class RadialBranchSolution:
    R1: float
    R2: float
    amplitude: float
    lam: float
    r: np.ndarray
    u: np.ndarray
    du: np.ndarray

    @property
    def sup_u(self):
        return float(np.max(self.u))

    def peak_radius(self):
        """Location of the interior maximum, parabola-refined."""
        k = int(np.argmax(self.u))
        if 0 < k < len(self.r) - 1:
            u0, u1, u2 = self.u[k - 1:k + 2]
            denom = u0 - 2 * u1 + u2
            if denom < 0:
                hr = self.r[k] - self.r[k - 1]
                return float(self.r[k] + 0.5 * hr * (u0 - u2) / denom)
        return float(self.r[k])

    def mass(self):
        """lam^2 int_Omega e^u dx, trapezoid on the shooting grid."""
        w = np.exp(np.minimum(self.u + 2 * np.log(self.lam), 700.0))
        return float(2 * np.pi * np.trapezoid(w * self.r, self.r))

    def residual_sup(self, n_check=2000):
        """Sup-norm of u'' + u'/r + lam^2 e^u on the profile by centred
        differences of the returned derivative samples."""
        r = np.linspace(self.r[0], self.r[-1], n_check)
        du = np.interp(r, self.r, self.du)
        u = np.interp(r, self.r, self.u)
        hr = r[1] - r[0]
        d2 = (du[2:] - du[:-2]) / (2 * hr)
        res = d2 + du[1:-1] / r[1:-1] + self.lam ** 2 * np.exp(u[1:-1])
        return float(np.max(np.abs(res)))


def _shoot(R1, R2, d, lam, rtol=1e-11, dense_n=4000):
    """Integrate u'' + u'/r + lam^2 e^u = 0 from (u(R2)=0, u'(R2)=d)."""
    loglam2 = 2.0 * np.log(lam)

    def rhs(r, y):
        u, v = y
        ex = np.exp(np.minimum(u + loglam2, 700.0))
        return (v, -v / r - ex)

    def overflow(r, y):
        return _U_OVERFLOW - y[0]
    overflow.terminal = True
    overflow.direction = -1

    sol = solve_ivp(rhs, (R2, R1), (0.0, d), method="RK45",
                    rtol=rtol, atol=1e-12, dense_output=True,
                    events=overflow, max_step=(R1 - R2) / 50)
    if sol.status == 1:
        raise NumericsError("radial_liouville_branch",
                            "ODE overflow (amplitude too large for float range)")
    if not sol.success:
        raise NumericsError("radial_liouville_branch", sol.message)
    r = np.linspace(R2, R1, dense_n)
    y = sol.sol(r)
    return r, y[0], y[1]


def radial_liouville_branch(R1, R2, amplitude, lam_bracket=(1e-12, 10.0),
                            max_bisect=200, rtol=1e-11):
    """Solve the two-point problem u(R2) = u(R1) = 0 with inner slope
    ``amplitude`` by bisecting the multiplier lam in log space.

    u(R1; lam) decreases in lam (stronger nonlinear focusing), so a sign
    change brackets the unique branch point.  The bracket is widened
    automatically when the requested amplitude pushes lam below its lower
    end; larger amplitudes select further-blown-up solutions.
    """
    if amplitude <= 0:
        raise ConfigError("amplitude (inner slope) must be positive")
    if not (R1 > R2 > 0):
        raise ConfigError("radial branch requires R1 > R2 > 0")

    def end_value(lam):
        _, u, _ = _shoot(R1, R2, amplitude, lam, rtol=rtol, dense_n=8)
        return u[-1]

    lo, hi = lam_bracket
    f_hi = end_value(hi)
    f_lo = end_value(lo)
    widen = 0
    while f_lo * f_hi > 0 and f_lo < 0 and widen < 40:
        # even the smallest lam overshoots: widen downwards
        lo = lo * 1e-12 if lo > 1e-250 else lo * 1e-3
        f_lo = end_value(lo)
        widen += 1
    if f_lo * f_hi > 0:
        raise NumericsError("radial_liouville_branch",
                            f"no sign change of u(R1) for lam in [{lo:.3e}, {hi:.3e}]")
    llo, lhi = np.log(lo), np.log(hi)
    flo = f_lo
    for _ in range(max_bisect):
        lmid = 0.5 * (llo + lhi)
        fmid = end_value(np.exp(lmid))
        if flo * fmid <= 0:
            lhi = lmid
        else:
            llo = lmid
            flo = fmid
        if lhi - llo < 1e-14:
            break
    lam = float(np.exp(0.5 * (llo + lhi)))
    r, u, du = _shoot(R1, R2, amplitude, lam, rtol=rtol)
    return RadialBranchSolution(R1=float(R1), R2=float(R2), amplitude=float(amplitude),
                                lam=lam, r=r, u=u, du=du)
