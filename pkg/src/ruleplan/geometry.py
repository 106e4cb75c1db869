"""Oriented-rectangle geometry, clearance regions, and optimal disk coverage.

A clearance region is a footprint rectangle inflated by per-side pads
(front/back/left/right).  The region is over-approximated by z equal disks
whose centers sit on its longitudinal midline; the minimum covering radius
is the circumradius of the per-disk sub-rectangle,

    r = sqrt(((w + h_l + h_r) / 2)^2 + ((l + h_f + h_b) / (2 z))^2).

Pairwise disk separation between two parties then certifies that their
clearance regions are disjoint.  Everything here is plain numpy; the
differentiable barrier variants live in :mod:`ruleplan.barriers`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Directional distance when no qualifying vertex exists (keeps max(0, .)
# terms at zero without branching).
SENTINEL = 1e6


@dataclass(frozen=True)
class Footprint:
    length: float  # m
    width: float  # m

    def __post_init__(self):
        if self.length <= 0 or self.width <= 0:
            raise ValueError("footprint: length and width must be > 0")


@dataclass(frozen=True)
class ClearanceSpec:
    """Per-side clearance pads as affine functions of speed, h(v) = base + rate*v."""

    front: tuple[float, float] = (0.0, 0.0)
    back: tuple[float, float] = (0.0, 0.0)
    left: tuple[float, float] = (0.0, 0.0)
    right: tuple[float, float] = (0.0, 0.0)

    def evaluate(self, v: float) -> tuple[float, float, float, float]:
        """Pads (h_f, h_b, h_l, h_r) at speed v."""
        return tuple(base + rate * v for base, rate in (self.front, self.back, self.left, self.right))

    def bounds(self, v_lo: float, v_hi: float):
        """Componentwise pad ranges over a speed interval."""
        lo = self.evaluate(v_lo)
        hi = self.evaluate(v_hi)
        return tuple(min(a, b) for a, b in zip(lo, hi)), tuple(max(a, b) for a, b in zip(lo, hi))

    def validate(self, v_lo: float, v_hi: float):
        lo, _ = self.bounds(v_lo, v_hi)
        if min(lo) < 0:
            raise ValueError("clearance pads must be nonnegative over the speed range")


@dataclass(frozen=True)
class OrientedRectangle:
    cx: float
    cy: float
    heading: float  # rad
    half_length: float
    half_width: float

    def __post_init__(self):
        if self.half_length <= 0 or self.half_width <= 0:
            raise ValueError("oriented rectangle: half extents must be > 0")

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        c, s = math.cos(self.heading), math.sin(self.heading)
        return np.array([c, s]), np.array([-s, c])

    def corners(self) -> np.ndarray:
        """Corner coordinates, CCW, shape (4, 2)."""
        t, n = self.axes()
        c = np.array([self.cx, self.cy])
        hl, hw = self.half_length, self.half_width
        return np.array([
            c + hl * t + hw * n,
            c - hl * t + hw * n,
            c - hl * t - hw * n,
            c + hl * t - hw * n,
        ])

    def to_local(self, points: np.ndarray) -> np.ndarray:
        """Map world points (N, 2) into the body frame (xi forward, upsilon left)."""
        t, n = self.axes()
        rel = np.atleast_2d(points) - np.array([self.cx, self.cy])
        return np.stack([rel @ t, rel @ n], axis=-1)


def footprint_rect(x: float, y: float, heading: float, fp: Footprint) -> OrientedRectangle:
    return OrientedRectangle(x, y, heading, fp.length / 2.0, fp.width / 2.0)


def clearance_rect(x: float, y: float, heading: float, fp: Footprint,
                   pads: tuple[float, float, float, float]) -> OrientedRectangle:
    """Footprint inflated by pads (h_f, h_b, h_l, h_r); center shifts accordingly."""
    h_f, h_b, h_l, h_r = pads
    t = np.array([math.cos(heading), math.sin(heading)])
    n = np.array([-t[1], t[0]])
    center = np.array([x, y]) + ((h_f - h_b) / 2.0) * t + ((h_l - h_r) / 2.0) * n
    return OrientedRectangle(center[0], center[1], heading,
                             (fp.length + h_f + h_b) / 2.0,
                             (fp.width + h_l + h_r) / 2.0)


# ---------------------------------------------------------------------------
# Disk coverage
# ---------------------------------------------------------------------------

def min_radius(fp: Footprint, pads: tuple[float, float, float, float], z: int) -> float:
    """Minimum radius for z equal disks to cover the padded region."""
    if z < 1:
        raise ValueError("disk count z must be >= 1")
    h_f, h_b, h_l, h_r = pads
    w_tot = fp.width + h_l + h_r
    l_tot = fp.length + h_f + h_b
    return math.hypot(w_tot / 2.0, l_tot / (2.0 * z))


def lateral_error(fp: Footprint, pads: tuple[float, float, float, float], z: int) -> float:
    """Lateral over-approximation sigma = r - (w + h_l + h_r) / 2 >= 0."""
    h_f, h_b, h_l, h_r = pads
    return min_radius(fp, pads, z) - (fp.width + h_l + h_r) / 2.0


def disk_longitudinal_offsets(fp: Footprint, pads: tuple[float, float, float, float],
                              z: int) -> np.ndarray:
    """Per-disk offsets along the heading axis from the footprint center."""
    h_f, h_b, _, _ = pads
    l_tot = fp.length + h_f + h_b
    j = np.arange(1, z + 1)
    return -fp.length / 2.0 - h_b + l_tot / (2.0 * z) * (2 * j - 1)


def disk_centers(x: float, y: float, heading: float, fp: Footprint,
                 pads: tuple[float, float, float, float], z: int) -> np.ndarray:
    """World coordinates of the z covering-disk centers, shape (z, 2).

    Centers sit on the region's longitudinal midline: offset (h_l - h_r) / 2
    to the left of the vehicle axis (zero for symmetric pads).
    """
    offs = disk_longitudinal_offsets(fp, pads, z)
    h_f, h_b, h_l, h_r = pads
    lat = (h_l - h_r) / 2.0
    t = np.array([math.cos(heading), math.sin(heading)])
    n = np.array([-t[1], t[0]])
    return np.array([x, y]) + offs[:, None] * t + lat * n


@dataclass(frozen=True)
class DiskCover:
    z: int  # disk count
    radius: float  # worst-case radius (pads at their upper bounds)
    sigma: float  # lateral error at the worst-case pads
    cost: float  # objective value z + beta * mean sigma


def _axis_quadrature(lo: float, hi: float, n: int = 5):
    """Gauss-Legendre nodes/weights normalized to mean value; point mass if degenerate."""
    if hi - lo <= 1e-12:
        return np.array([lo]), np.array([1.0])
    xs, ws = np.polynomial.legendre.leggauss(n)
    mid, half = (hi + lo) / 2.0, (hi - lo) / 2.0
    return mid + half * xs, ws / 2.0  # weights sum to 1 -> averaged integral


def optimize_cover(fp: Footprint, h_lo: tuple[float, float, float, float],
                   h_hi: tuple[float, float, float, float], beta: float,
                   z_max: int) -> DiskCover:
    """Pick the disk count minimizing z + beta * (mean lateral error over pad ranges).

    The 4-D integral over the pad box is evaluated by a tensor-product
    Gauss-Legendre rule (5 nodes per non-degenerate axis) and normalized by
    the box volume, so degenerate ranges collapse to point evaluation.
    """
    if beta < 0:
        raise ValueError("beta must be >= 0")
    if z_max < 1:
        raise ValueError("z_max must be >= 1")
    for lo, hi in zip(h_lo, h_hi):
        if hi < lo:
            raise ValueError("empty pad range: upper bound below lower bound")
    axes = [_axis_quadrature(lo, hi) for lo, hi in zip(h_lo, h_hi)]
    grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    weight = np.ones_like(grids[0])
    for dim, (_, ws) in enumerate(axes):
        shape = [1] * 4
        shape[dim] = -1
        weight = weight * ws.reshape(shape)

    best = None
    for z in range(1, z_max + 1):
        h_f, h_b, h_l, h_r = grids
        w_half = (fp.width + h_l + h_r) / 2.0
        l_half = (fp.length + h_f + h_b) / (2.0 * z)
        sigma = np.sqrt(w_half**2 + l_half**2) - w_half
        cost = z + beta * float(np.sum(weight * sigma))
        if best is None or cost < best[0] - 1e-12:
            best = (cost, z)
    cost, z = best
    return DiskCover(z=z, radius=min_radius(fp, h_hi, z),
                     sigma=lateral_error(fp, h_hi, z), cost=cost)


def coverage_check(z: int, radius: float, rect: OrientedRectangle,
                   n_per_axis: int = 200) -> bool:
    """Theorem-style oracle: every grid sample of the rectangle lies in some disk.

    Disk centers are placed on the rectangle's own longitudinal midline per
    the covering rule.
    """
    if n_per_axis < 2:
        raise ValueError("need at least a 2x2 sample grid")
    length = 2.0 * rect.half_length
    offs = -rect.half_length + length / (2.0 * z) * (2 * np.arange(1, z + 1) - 1)
    xi = np.linspace(-rect.half_length, rect.half_length, n_per_axis)
    up = np.linspace(-rect.half_width, rect.half_width, n_per_axis)
    XI, UP = np.meshgrid(xi, up, indexing="ij")
    d2 = (XI[..., None] - offs) ** 2 + UP[..., None] ** 2
    return bool(np.all(np.min(d2, axis=-1) <= radius**2 + 1e-12))


# ---------------------------------------------------------------------------
# Distances
# ---------------------------------------------------------------------------

def _segment_distance(p1, p2, q1, q2) -> float:
    """Minimum distance between two 2-D segments."""
    d1 = p2 - p1
    d2 = q2 - q1
    r = p1 - q1
    a = d1 @ d1
    e = d2 @ d2
    f = d2 @ r
    if a <= 1e-18 and e <= 1e-18:
        return float(np.linalg.norm(r))
    if a <= 1e-18:
        t = np.clip(f / e, 0.0, 1.0)
        return float(np.linalg.norm(p1 - (q1 + t * d2)))
    c = d1 @ r
    if e <= 1e-18:
        s = np.clip(-c / a, 0.0, 1.0)
        return float(np.linalg.norm(p1 + s * d1 - q1))
    b = d1 @ d2
    denom = a * e - b * b
    s = np.clip((b * f - c * e) / denom, 0.0, 1.0) if denom > 1e-18 else 0.0
    t = (b * s + f) / e
    if t < 0.0:
        t = 0.0
        s = np.clip(-c / a, 0.0, 1.0)
    elif t > 1.0:
        t = 1.0
        s = np.clip((b - c) / a, 0.0, 1.0)
    return float(np.linalg.norm(p1 + s * d1 - (q1 + t * d2)))


def rect_rect_distance(r1: OrientedRectangle, r2: OrientedRectangle) -> float:
    """Signed distance between two oriented rectangles.

    Positive: minimum separation; zero: touching; negative: penetration
    depth (largest separating-axis overlap deficit, negated).
    """
    c1 = r1.corners()
    c2 = r2.corners()
    axes = np.vstack([r1.axes(), r2.axes()])
    gaps = []
    overlaps = []
    for ax in axes:
        p1 = c1 @ ax
        p2 = c2 @ ax
        lo1, hi1 = p1.min(), p1.max()
        lo2, hi2 = p2.min(), p2.max()
        gaps.append(max(lo1 - hi2, lo2 - hi1))
        overlaps.append(min(hi1, hi2) - max(lo1, lo2))
    if max(gaps) > 0.0:
        # disjoint: exact min distance over all edge pairs
        best = math.inf
        for i in range(4):
            a1, a2 = c1[i], c1[(i + 1) % 4]
            for j in range(4):
                best = min(best, _segment_distance(a1, a2, c2[j], c2[(j + 1) % 4]))
        return best
    return -min(overlaps)


def point_rect_distance(rect: OrientedRectangle, p) -> float:
    """Signed distance from a point to a rectangle (negative inside)."""
    local = rect.to_local(np.asarray(p, dtype=float))[0]
    dx = abs(local[0]) - rect.half_length
    dy = abs(local[1]) - rect.half_width
    if dx <= 0.0 and dy <= 0.0:
        return max(dx, dy)
    return math.hypot(max(dx, 0.0), max(dy, 0.0))


def directional_distances(ego: OrientedRectangle, other: OrientedRectangle) -> tuple[float, float, float]:
    """(d_left, d_right, d_front) gaps from ego's edges to the other's vertices.

    Vertices are projected into ego's body frame; the front gap considers
    vertices ahead of the front edge inside ego's width band, the side gaps
    vertices beside ego inside its length band.  Empty sets yield SENTINEL.
    """
    local = ego.to_local(other.corners())
    xi, up = local[:, 0], local[:, 1]
    hl, hw = ego.half_length, ego.half_width

    front_sel = (xi >= hl) & (np.abs(up) <= hw)
    left_sel = (up >= hw) & (np.abs(xi) <= hl)
    right_sel = (up <= -hw) & (np.abs(xi) <= hl)

    d_f = float(np.min(xi[front_sel]) - hl) if front_sel.any() else SENTINEL
    d_l = float(np.min(up[left_sel]) - hw) if left_sel.any() else SENTINEL
    d_r = float(np.min(-up[right_sel]) - hw) if right_sel.any() else SENTINEL
    return d_l, d_r, d_f


# ---------------------------------------------------------------------------
# Corridor / lane infringement
# ---------------------------------------------------------------------------

def polyline_lateral(points: np.ndarray, p) -> float:
    """Signed lateral offset of point p from a polyline (positive = left).

    The first and last segments extend to infinity so points beyond the
    polyline ends are measured against the end tangents, not the endpoints.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or len(pts) < 2:
        raise ValueError("polyline needs at least two points")
    p = np.asarray(p, dtype=float)
    n_seg = len(pts) - 1
    best = None
    for i in range(n_seg):
        a, b = pts[i], pts[i + 1]
        ab = b - a
        L2 = ab @ ab
        if L2 <= 1e-18:
            continue
        t = float((p - a) @ ab / L2)
        t_lo = -math.inf if i == 0 else 0.0
        t_hi = math.inf if i == n_seg - 1 else 1.0
        t = min(max(t, t_lo), t_hi)
        closest = a + t * ab
        d = float(np.linalg.norm(p - closest))
        if best is None or d < best[0]:
            rel = p - a
            cross = ab[0] * rel[1] - ab[1] * rel[0]
            sign = math.copysign(1.0, cross) if d > 0 else 0.0
            best = (d, sign)
    if best is None:
        raise ValueError("polyline has no usable segments")
    return best[0] * best[1]


def infringement_distances(rect: OrientedRectangle, centerline: np.ndarray,
                           width: float, d_max: float) -> tuple[float, float]:
    """(d_left, d_right) footprint infringement beyond a corridor of given width.

    Each distance is the worst vertex excess past the respective boundary,
    clamped to [0, d_max]; both zero when the footprint is fully inside.
    """
    if width <= 0:
        raise ValueError("corridor width must be > 0")
    half = width / 2.0
    lats = [polyline_lateral(centerline, c) for c in rect.corners()]
    d_left = min(max(max(lats) - half, 0.0), d_max)
    d_right = min(max(-min(lats) - half, 0.0), d_max)
    return d_left, d_right
