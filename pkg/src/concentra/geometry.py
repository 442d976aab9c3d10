"""Planar domains, closed curves, Fermi coordinates and level-curve extraction.

Conventions used throughout the package:

* a ``ClosedCurve`` stores its samples in counterclockwise order; the stored
  unit normal points toward the side labelled "plus".  For a concentration
  curve gamma this is the exterior normal of the outer region ("minus" side),
  i.e. the normal points into the bounded region enclosed by gamma unless the
  curve was extracted from a field whose larger values lie outside.
* the signed Fermi distance t of a point x is positive when x lies on the
  plus side: x = gamma(s) + t n(s).
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigError, NumericsError

DEFAULT_CURVE_SAMPLES = 512


# ---------------------------------------------------------------------------
# closed curves
# ---------------------------------------------------------------------------

def _polyline_lengths(points):
    seg = np.diff(np.vstack([points, points[:1]]), axis=0)
    return np.hypot(seg[:, 0], seg[:, 1])


def _signed_area(points):
    x, y = points[:, 0], points[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    return 0.5 * np.sum(x * yn - xn * y)


def _is_simple(points, tol=1e-12):
    """Check a closed polyline for self intersections (all segment pairs)."""
    n = len(points)
    p = points
    q = np.roll(points, -1, axis=0)
    d = q - p
    i, j = np.triu_indices(n, k=2)
    # skip the wrap-around neighbour pair (segment n-1 with segment 0)
    keep = ~((i == 0) & (j == n - 1))
    i, j = i[keep], j[keep]
    # segment i: p[i] + s d[i];  segment j: p[j] + t d[j]
    r = d[i]
    s = d[j]
    qp = p[j] - p[i]
    denom = r[:, 0] * s[:, 1] - r[:, 1] * s[:, 0]
    ok = np.abs(denom) > tol
    with np.errstate(divide="ignore", invalid="ignore"):
        tpar = (qp[:, 0] * s[:, 1] - qp[:, 1] * s[:, 0]) / denom
        upar = (qp[:, 0] * r[:, 1] - qp[:, 1] * r[:, 0]) / denom
    hit = ok & (tpar > tol) & (tpar < 1 - tol) & (upar > tol) & (upar < 1 - tol)
    return not np.any(hit)


def _resample_uniform(points, n):
    """Resample a closed polyline at n points with uniform arclength spacing."""
    closed = np.vstack([points, points[:1]])
    seg = np.diff(closed, axis=0)
    ds = np.hypot(seg[:, 0], seg[:, 1])
    s = np.concatenate([[0.0], np.cumsum(ds)])
    total = s[-1]
    snew = np.linspace(0.0, total, n, endpoint=False)
    x = np.interp(snew, s, closed[:, 0])
    y = np.interp(snew, s, closed[:, 1])
    return np.column_stack([x, y])


@dataclass
class ClosedCurve:
    """Arclength-sampled simple closed curve with per-sample unit normals.

    ``samples`` has shape (n, 2) and does not repeat the first point; the
    curve closes implicitly.  ``s`` holds the cumulative arclength of each
    sample starting at 0.  ``plus_is_bounded`` records whether the plus side
    (the side the normals point into) is the bounded component.
    """

    samples: np.ndarray
    s: np.ndarray = field(default=None)
    normals: np.ndarray = field(default=None)
    plus_is_bounded: bool = True

    def __post_init__(self):
        pts = np.asarray(self.samples, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 8:
            raise ConfigError("ClosedCurve needs an (n,2) array with n >= 8")
        # drop an explicitly repeated closing point
        if np.allclose(pts[0], pts[-1]):
            pts = pts[:-1]
        if _signed_area(pts) < 0:
            pts = pts[::-1].copy()
        if not _is_simple(pts):
            raise ConfigError("curve is self-intersecting")
        self.samples = pts
        if self.s is None:
            ds = _polyline_lengths(pts)
            self.s = np.concatenate([[0.0], np.cumsum(ds[:-1])])
            self._length = float(np.sum(ds))
        else:
            self.s = np.asarray(self.s, dtype=float)
            ds = _polyline_lengths(pts)
            self._length = float(np.sum(ds))
        if self.normals is None:
            self.normals = self._compute_normals(pts, inward=self.plus_is_bounded)
        else:
            self.normals = np.asarray(self.normals, dtype=float)
        self._tree = None

    @staticmethod
    def _compute_normals(pts, inward=True, smooth_tangent=True):
        # central-difference tangents on the closed ring; one 3-point
        # averaging pass on the tangents keeps the normal field C^1-ish
        # without biasing the sample positions.
        t = np.roll(pts, -1, axis=0) - np.roll(pts, 1, axis=0)
        if smooth_tangent:
            t = 0.25 * np.roll(t, 1, axis=0) + 0.5 * t + 0.25 * np.roll(t, -1, axis=0)
        norm = np.hypot(t[:, 0], t[:, 1])
        t = t / norm[:, None]
        # CCW ordering: outward normal is (ty, -tx); inward is the negative
        out = np.column_stack([t[:, 1], -t[:, 0]])
        return -out if inward else out

    # -- basic quantities --------------------------------------------------
    @property
    def n(self):
        return len(self.samples)

    @property
    def length(self):
        return self._length

    def enclosed_area(self):
        return float(_signed_area(self.samples))

    def tangents(self):
        t = np.roll(self.samples, -1, axis=0) - np.roll(self.samples, 1, axis=0)
        return t / np.hypot(t[:, 0], t[:, 1])[:, None]

    def curvature(self):
        """Signed curvature per sample (positive for a CCW-traversed circle)."""
        t = self.tangents()
        ang = np.arctan2(t[:, 1], t[:, 0])
        dang = np.roll(ang, -1) - np.roll(ang, 1)
        dang = (dang + np.pi) % (2 * np.pi) - np.pi
        two_ds = np.roll(self.s, -1) - np.roll(self.s, 1)
        two_ds[0] += self.length
        two_ds[-1] += self.length
        return dang / two_ds

    def turning_number(self):
        t = self.tangents()
        ang = np.arctan2(t[:, 1], t[:, 0])
        d = np.diff(np.concatenate([ang, ang[:1]]))
        d = (d + np.pi) % (2 * np.pi) - np.pi
        return float(np.sum(d) / (2 * np.pi))

    def point_at(self, s):
        """Linear interpolation of the curve position at arclength s."""
        s = np.mod(np.asarray(s, dtype=float), self.length)
        closed_s = np.concatenate([self.s, [self.length]])
        closed_p = np.vstack([self.samples, self.samples[:1]])
        x = np.interp(s, closed_s, closed_p[:, 0])
        y = np.interp(s, closed_s, closed_p[:, 1])
        return np.column_stack([x, y]) if np.ndim(s) else np.array([x, y])

    def normal_at(self, s):
        s = np.mod(np.asarray(s, dtype=float), self.length)
        closed_s = np.concatenate([self.s, [self.length]])
        closed_n = np.vstack([self.normals, self.normals[:1]])
        nx = np.interp(s, closed_s, closed_n[:, 0])
        ny = np.interp(s, closed_s, closed_n[:, 1])
        out = np.column_stack([nx, ny]) if np.ndim(s) else np.array([nx, ny])
        nrm = np.hypot(out[..., 0], out[..., 1])
        return out / (nrm[..., None] if np.ndim(s) else nrm)

    def contains(self, points):
        """Winding (crossing-number) test for the bounded side; vectorized."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        x, y = pts[:, 0], pts[:, 1]
        px = self.samples[:, 0]
        py = self.samples[:, 1]
        qx = np.roll(px, -1)
        qy = np.roll(py, -1)
        inside = np.zeros(len(pts), dtype=bool)
        # standard even-odd ray casting, vectorized over segments
        for k in range(self.n):
            c = (py[k] > y) != (qy[k] > y)
            if not np.any(c):
                continue
            xin = (qx[k] - px[k]) * (y[c] - py[k]) / (qy[k] - py[k]) + px[k]
            upd = np.zeros_like(inside)
            upd[c] = x[c] < xin
            inside ^= upd
        return inside if np.ndim(points) == 2 else bool(inside[0])

    def _kdtree(self):
        if self._tree is None:
            self._tree = cKDTree(self.samples)
        return self._tree

    def project(self, points):
        """Nearest-point projection onto the polyline.

        Returns (foot, s_foot, dist, seg_index) arrays for the input points.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        _, idx = self._kdtree().query(pts)
        n = self.n
        # candidate segments around the nearest sample
        cand = (idx[:, None] + np.arange(-3, 3)[None, :]) % n
        a = self.samples[cand]                      # (m, 4, 2)
        b = self.samples[(cand + 1) % n]
        ab = b - a
        ap = pts[:, None, :] - a
        denom = np.maximum(np.sum(ab * ab, axis=2), 1e-300)
        tpar = np.clip(np.sum(ap * ab, axis=2) / denom, 0.0, 1.0)
        foot = a + tpar[:, :, None] * ab
        d2 = np.sum((pts[:, None, :] - foot) ** 2, axis=2)
        best = np.argmin(d2, axis=1)
        rows = np.arange(len(pts))
        seg = cand[rows, best]
        footp = foot[rows, best]
        tbest = tpar[rows, best]
        seglen = _polyline_lengths(self.samples)
        sfoot = self.s[seg] + tbest * seglen[seg]
        dist = np.sqrt(d2[rows, best])
        return footp, sfoot, dist, seg

    def to_csv(self, path_or_buf):
        """Export as CSV with header ``s,x,y,nx,ny``."""
        def _write(f):
            w = csv.writer(f)
            w.writerow(["s", "x", "y", "nx", "ny"])
            for si, (x, y), (nx, ny) in zip(self.s, self.samples, self.normals):
                w.writerow([repr(float(si)), repr(float(x)), repr(float(y)),
                            repr(float(nx)), repr(float(ny))])
        if hasattr(path_or_buf, "write"):
            _write(path_or_buf)
        else:
            with open(path_or_buf, "w", newline="") as f:
                _write(f)

    def csv_string(self):
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()


def circle(radius, center=(0.0, 0.0), n=DEFAULT_CURVE_SAMPLES, plus_is_bounded=True):
    """Closed curve sampling a circle; normals follow the package convention."""
    if radius <= 0:
        raise ConfigError("circle radius must be positive")
    theta = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    pts = np.column_stack([center[0] + radius * np.cos(theta),
                           center[1] + radius * np.sin(theta)])
    return ClosedCurve(pts, plus_is_bounded=plus_is_bounded)


# ---------------------------------------------------------------------------
# domains
# ---------------------------------------------------------------------------

@dataclass
class Domain2D:
    """Bounded planar region with outer boundary and optional hole."""

    outer: ClosedCurve
    hole: ClosedCurve = None
    kind: str = "general"          # disc | annulus | general
    R1: float = None
    R2: float = None
    center: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.kind not in ("disc", "annulus", "general"):
            raise ConfigError(f"unknown domain kind {self.kind!r}")
        if self.kind == "disc" and (self.R1 is None or self.R1 <= 0):
            raise ConfigError("disc requires R1 > 0")
        if self.kind == "annulus":
            if self.R1 is None or self.R2 is None or not self.R1 > self.R2 > 0:
                raise ConfigError("annulus requires R1 > R2 > 0")
        if self.hole is not None:
            inside = self.outer.contains(self.hole.samples)
            if not np.all(inside):
                raise ConfigError("hole not nested strictly inside the outer boundary")
            gap = self.boundary_gap()
            if gap <= 0:
                raise ConfigError("hole touches the outer boundary")

    @property
    def doubly_connected(self):
        return self.hole is not None

    def boundary_gap(self):
        if self.hole is None:
            return np.inf
        _, _, d, _ = self.outer.project(self.hole.samples)
        return float(np.min(d))

    @property
    def is_radial(self):
        return self.kind in ("disc", "annulus")

    def area(self):
        a = abs(self.outer.enclosed_area())
        if self.hole is not None:
            a -= abs(self.hole.enclosed_area())
        return a

    def diameter(self):
        pts = self.outer.samples
        lo = pts.min(axis=0)
        hi = pts.max(axis=0)
        return float(np.hypot(*(hi - lo)))

    def bounding_box(self, pad=0.0):
        pts = self.outer.samples
        lo = pts.min(axis=0) - pad
        hi = pts.max(axis=0) + pad
        return lo, hi

    def contains(self, points):
        inside = self.outer.contains(points)
        if self.hole is not None:
            inside &= ~self.hole.contains(points)
        return inside


def build_domain(spec):
    """Build a Domain2D from a configuration mapping or JSON file path.

    Accepted keys: ``kind`` ("disc" | "annulus" | "general"), ``R1``, ``R2``,
    ``center``, and for general domains explicit ``outer`` / ``hole``
    polylines as [[x, y], ...].
    """
    if isinstance(spec, str):
        with open(spec) as f:
            spec = json.load(f)
    if isinstance(spec, Domain2D):
        return spec
    kind = spec.get("kind")
    center = tuple(spec.get("center", (0.0, 0.0)))
    n = int(spec.get("samples", DEFAULT_CURVE_SAMPLES))
    if kind == "disc":
        R1 = float(spec["R1"])
        if R1 <= 0:
            raise ConfigError("disc requires R1 > 0")
        return Domain2D(outer=circle(R1, center, n, plus_is_bounded=False),
                        kind="disc", R1=R1, center=center)
    if kind == "annulus":
        R1 = float(spec["R1"])
        R2 = float(spec["R2"])
        if not R1 > R2 > 0:
            raise ConfigError("annulus requires R1 > R2 > 0")
        return Domain2D(outer=circle(R1, center, n, plus_is_bounded=False),
                        hole=circle(R2, center, n, plus_is_bounded=True),
                        kind="annulus", R1=R1, R2=R2, center=center)
    if kind == "general":
        outer = ClosedCurve(np.asarray(spec["outer"], dtype=float))
        outer = ClosedCurve(_resample_uniform(outer.samples, n), plus_is_bounded=False)
        hole = None
        if spec.get("hole") is not None:
            hole = ClosedCurve(np.asarray(spec["hole"], dtype=float))
            hole = ClosedCurve(_resample_uniform(hole.samples, n), plus_is_bounded=True)
        return Domain2D(outer=outer, hole=hole, kind="general", center=center)
    raise ConfigError(f"unknown domain kind {kind!r}")


# ---------------------------------------------------------------------------
# Fermi coordinates
# ---------------------------------------------------------------------------

OUTSIDE_TUBE = object()   # sentinel returned for points beyond the tube


class FermiPatch:
    """Tubular neighbourhood coordinates (s, t) of a closed curve.

    The forward map is x = gamma(s) + t n(s); the tube half-width delta is
    limited by curvature so the map stays a diffeomorphism.  By default
    delta = min(0.5 / max|kappa|, half the distance from the curve to the
    domain boundary); pass ``tube_radius`` to override (the curvature bound
    is always enforced).
    """

    def __init__(self, curve: ClosedCurve, domain: Domain2D = None,
                 tube_radius=None, kappa_fraction=0.5):
        self.base = curve
        kap = np.max(np.abs(curve.curvature()))
        kap_bound = kappa_fraction / kap if kap > 0 else np.inf
        dist_bound = np.inf
        if domain is not None:
            _, _, d_out, _ = domain.outer.project(curve.samples)
            dist_bound = np.min(d_out)
            if domain.hole is not None:
                _, _, d_hole, _ = domain.hole.project(curve.samples)
                dist_bound = min(dist_bound, np.min(d_hole))
        if tube_radius is None:
            tube_radius = min(kap_bound, 0.5 * dist_bound)
        elif kap > 0:
            tube_radius = min(tube_radius, 0.95 / kap)
        if not np.isfinite(tube_radius) or tube_radius <= 0:
            raise NumericsError("FermiPatch", "cannot determine a positive tube radius")
        self.delta = float(tube_radius)

    def forward(self, s, t):
        """Map (s, t) to physical points."""
        p = self.base.point_at(s)
        n = self.base.normal_at(s)
        t = np.asarray(t, dtype=float)
        return p + (t[..., None] if np.ndim(t) else t) * n

    def inverse(self, points, clip=False):
        """Map points to (s, t); entries beyond the tube get t = nan.

        With ``clip=True`` the coordinates are still returned for points
        beyond the tube (useful for building blended fields).
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        foot, sfoot, dist, _ = self.base.project(pts)
        nfoot = self.base.normal_at(sfoot)
        side = np.sign(np.sum((pts - foot) * nfoot, axis=1))
        side[side == 0] = 1.0
        t = dist * side
        if not clip:
            t = np.where(dist < self.delta, t, np.nan)
        if np.ndim(points) == 1:
            return float(sfoot[0]), float(t[0])
        return sfoot, t


def fermi_coordinates(patch: FermiPatch, x):
    """Coordinates (s, t) of a single point, or OUTSIDE_TUBE beyond the tube."""
    s, t = patch.inverse(np.asarray(x, dtype=float))
    if np.isnan(t):
        return OUTSIDE_TUBE
    return s, t


# ---------------------------------------------------------------------------
# level curves and areas
# ---------------------------------------------------------------------------

def extract_level_curve(fld, level, n=DEFAULT_CURVE_SAMPLES):
    """Extract the level set of a grid field as a single closed curve.

    Marching squares runs on the masked grid; the contour is resampled to
    uniform arclength and oriented so that the plus side (where the stored
    normals point) is the side with the larger field values.
    """
    from .fields import ScalarField  # local import to avoid a cycle

    if not isinstance(fld, ScalarField):
        # radial profiles know how to find their own level radii
        return fld.level_curve(level, n=n)
    from skimage import measure

    vals = np.array(fld.values, dtype=float)
    vals[~fld.defined] = np.nan
    lo = np.nanmin(vals)
    hi = np.nanmax(vals)
    if not (lo < level < hi):
        raise NumericsError("extract_level_curve", f"level set empty (field range [{lo:g}, {hi:g}])")
    contours = measure.find_contours(vals, level)
    closed = [c for c in contours if np.allclose(c[0], c[-1])]
    if len(closed) == 0:
        raise NumericsError("extract_level_curve",
                            "open contour hitting the mask edge; no closed component")
    if len(closed) > 1:
        # keep only substantial components; tiny loops are grid noise
        big = [c for c in closed if len(c) > 8]
        if len(big) != 1:
            raise NumericsError("extract_level_curve",
                                f"level set has {max(len(big), len(closed))} closed components")
        closed = big
    cont = closed[0][:-1]
    pts = np.column_stack([fld.origin[0] + cont[:, 0] * fld.h,
                           fld.origin[1] + cont[:, 1] * fld.h])
    pts = _resample_uniform(pts, n)
    curve = ClosedCurve(pts, plus_is_bounded=True)
    # orient normals toward the larger values
    probe = 0.25 * min(fld.h * 4, 0.1 * np.sqrt(abs(curve.enclosed_area())))
    inner = curve.samples + probe * curve.normals
    outer = curve.samples - probe * curve.normals
    vi = fld.interpolate(inner, fill=np.nan)
    vo = fld.interpolate(outer, fill=np.nan)
    good = ~(np.isnan(vi) | np.isnan(vo))
    if np.sum(good) == 0:
        raise NumericsError("extract_level_curve", "cannot probe sides of the contour")
    if np.nanmedian(vi[good]) < np.nanmedian(vo[good]):
        curve = ClosedCurve(curve.samples, normals=-curve.normals, plus_is_bounded=False)
    return curve


def region_areas(domain: Domain2D, gamma: ClosedCurve):
    """Areas (|Omega_plus|, |Omega_minus|) of the two sides of gamma.

    Omega_plus is the bounded side of gamma minus the hole (when the hole
    lies inside gamma); the two areas sum to the domain area.
    """
    if not np.all(domain.contains(gamma.samples)):
        raise ConfigError("gamma exits the domain")
    a_in = abs(gamma.enclosed_area())
    if domain.hole is not None:
        hole_inside = gamma.contains(domain.hole.samples)
        if np.all(hole_inside):
            a_in -= abs(domain.hole.enclosed_area())
        elif np.any(hole_inside):
            raise ConfigError("gamma crosses the hole boundary")
    a_plus = a_in
    a_minus = domain.area() - a_in
    return a_plus, a_minus
