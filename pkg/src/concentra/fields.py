"""Grid-sampled scalar fields on embedded-boundary Cartesian grids."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

# mask codes
OUTSIDE = -1
MINUS = 0
PLUS = 1


@dataclass
class ScalarField:
    """Node-centred scalar field on a uniform grid.

    ``values[i, j]`` lives at (origin[0] + i h, origin[1] + j h).  ``mask``
    uses -1 outside the region, 0 on the minus side and 1 on the plus side
    (0 everywhere inside when no internal curve splits the region).
    ``cut_info`` carries per-cut-cell boundary metadata produced by the
    embedded solver: arrays (i, j, direction, theta, bvalue) with theta the
    fraction of the grid edge between the node and the true boundary.
    """

    origin: tuple
    h: float
    nx: int
    ny: int
    values: np.ndarray = None
    mask: np.ndarray = None
    cut_info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.values is None:
            self.values = np.full((self.nx, self.ny), np.nan)
        if self.mask is None:
            self.mask = np.zeros((self.nx, self.ny), dtype=np.int8)
        self.values = np.asarray(self.values, dtype=float)
        self.mask = np.asarray(self.mask, dtype=np.int8)
        if self.values.shape != (self.nx, self.ny):
            raise ConfigError("values shape does not match grid counts")

    # -- coordinates --------------------------------------------------------
    @property
    def xs(self):
        return self.origin[0] + self.h * np.arange(self.nx)

    @property
    def ys(self):
        return self.origin[1] + self.h * np.arange(self.ny)

    def meshgrid(self):
        return np.meshgrid(self.xs, self.ys, indexing="ij")

    @property
    def defined(self):
        return self.mask >= 0

    def node_points(self, sel=None):
        X, Y = self.meshgrid()
        if sel is None:
            sel = self.defined
        return np.column_stack([X[sel], Y[sel]])

    # -- interpolation -------------------------------------------------------
    def interpolate(self, points, fill=np.nan):
        """Bilinear interpolation; cells with undefined corners fall back to
        an average of the defined corners, fully undefined cells give fill."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        fx = (pts[:, 0] - self.origin[0]) / self.h
        fy = (pts[:, 1] - self.origin[1]) / self.h
        i0 = np.clip(np.floor(fx).astype(int), 0, self.nx - 2)
        j0 = np.clip(np.floor(fy).astype(int), 0, self.ny - 2)
        ax = fx - i0
        ay = fy - j0
        out = np.full(len(pts), fill, dtype=float)
        vals = np.empty((len(pts), 4))
        ok = np.empty((len(pts), 4), dtype=bool)
        for k, (di, dj) in enumerate(((0, 0), (1, 0), (0, 1), (1, 1))):
            vals[:, k] = self.values[i0 + di, j0 + dj]
            ok[:, k] = self.mask[i0 + di, j0 + dj] >= 0
        w = np.column_stack([(1 - ax) * (1 - ay), ax * (1 - ay),
                             (1 - ax) * ay, ax * ay])
        all_ok = np.all(ok, axis=1)
        out[all_ok] = np.sum(w[all_ok] * vals[all_ok], axis=1)
        part = ~all_ok & np.any(ok, axis=1)
        if np.any(part):
            wp = np.where(ok[part], w[part], 0.0)
            sw = np.sum(wp, axis=1)
            good = sw > 1e-12
            idx = np.where(part)[0][good]
            out[idx] = np.sum(wp[good] * np.where(ok[part][good], vals[part][good], 0.0),
                              axis=1) / sw[good]
        if np.ndim(points) == 1:
            return float(out[0])
        return out

    # -- calculus ------------------------------------------------------------
    def integrate(self, integrand=None, region=None):
        """Midpoint-rule integral of the field (or of ``integrand`` values)
        over the masked region; each defined node carries weight h^2."""
        v = self.values if integrand is None else integrand
        sel = self.defined if region is None else region
        return float(np.sum(v[sel]) * self.h ** 2)

    def gradient_squared(self):
        """|grad u|^2 per node, centred differences inside, one-sided at the
        region edge; undefined nodes give 0 contribution."""
        v = self.values
        d = self.defined
        gx = np.zeros_like(v)
        gy = np.zeros_like(v)
        h = self.h

        def axis_grad(vv, dd, axis):
            g = np.zeros_like(vv)
            vp = np.roll(vv, -1, axis=axis)
            vm = np.roll(vv, 1, axis=axis)
            dp = np.roll(dd, -1, axis=axis)
            dm = np.roll(dd, 1, axis=axis)
            # guard the wrap-around
            if axis == 0:
                dp[-1, :] = False
                dm[0, :] = False
            else:
                dp[:, -1] = False
                dm[:, 0] = False
            both = dd & dp & dm
            g[both] = (vp[both] - vm[both]) / (2 * h)
            fwd = dd & dp & ~dm
            g[fwd] = (vp[fwd] - vv[fwd]) / h
            bwd = dd & ~dp & dm
            g[bwd] = (vv[bwd] - vm[bwd]) / h
            return g

        gx = axis_grad(v, d, 0)
        gy = axis_grad(v, d, 1)
        out = gx ** 2 + gy ** 2
        out[~d] = 0.0
        return out

    # -- export ----------------------------------------------------------------
    def to_csv(self, path_or_buf):
        """Export as CSV ``i,j,x,y,value,mask`` (defined nodes only)."""
        def _write(f):
            w = csv.writer(f)
            w.writerow(["i", "j", "x", "y", "value", "mask"])
            xs, ys = self.xs, self.ys
            ii, jj = np.where(self.defined)
            for i, j in zip(ii, jj):
                w.writerow([int(i), int(j), repr(float(xs[i])), repr(float(ys[j])),
                            repr(float(self.values[i, j])), int(self.mask[i, j])])
        if hasattr(path_or_buf, "write"):
            _write(path_or_buf)
        else:
            with open(path_or_buf, "w", newline="") as f:
                _write(f)

    def csv_string(self):
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()


def grid_for_domain(domain, h, pad=None):
    """Uniform grid covering the domain bounding box with a small margin.

    The margin is a half-integer multiple of h so that circular boundaries
    centred on grid-aligned points do not pass exactly through nodes."""
    if pad is None:
        pad = 3.5 * h
    lo, hi = domain.bounding_box(pad=pad)
    nx = int(np.ceil((hi[0] - lo[0]) / h)) + 1
    ny = int(np.ceil((hi[1] - lo[1]) / h)) + 1
    return ScalarField(origin=(float(lo[0]), float(lo[1])), h=float(h), nx=nx, ny=ny)


def analytic_field(domain, h, func, pad=None):
    """Sample ``func(x, y)`` on the domain grid; nodes outside get mask -1."""
    fld = grid_for_domain(domain, h, pad=pad)
    X, Y = fld.meshgrid()
    pts = np.column_stack([X.ravel(), Y.ravel()])
    inside = domain.contains(pts).reshape(X.shape)
    fld.mask = np.where(inside, MINUS, OUTSIDE).astype(np.int8)
    fld.values = np.where(inside, func(X, Y), np.nan)
    return fld
