"""Frenet-frame vehicle model, reference-path bookkeeping, and integration.

State order is (s, d, mu, v, a, delta, omega):

    s_dot     = v cos(mu + beta) / (1 - d kappa)
    d_dot     = v sin(mu + beta)
    mu_dot    = (v / l_r) sin(beta) - kappa v cos(mu + beta) / (1 - d kappa)
    v_dot     = a
    a_dot     = u_jerk
    delta_dot = omega
    omega_dot = u_steer

with beta = arctan(l_r / (l_r + l_f) * tan(delta)).  kappa is the reference
curvature at the tracked point and is held constant within a step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import VehicleGeometry

STATE_NAMES = ("s", "d", "mu", "v", "a", "delta", "omega")
IDX_S, IDX_D, IDX_MU, IDX_V, IDX_A, IDX_DELTA, IDX_OMEGA = range(7)

SINGULARITY_TOL = 1e-6


class SingularityError(RuntimeError):
    """Raised when 1 - d*kappa falls below the validity threshold."""


class PathError(ValueError):
    """Malformed reference path."""


@dataclass(frozen=True)
class VehicleState:
    s: float = 0.0  # along-path progress (m)
    d: float = 0.0  # lateral offset, positive left (m)
    mu: float = 0.0  # heading error (rad)
    v: float = 0.0  # speed (m/s)
    a: float = 0.0  # acceleration (m/s^2)
    delta: float = 0.0  # steering angle (rad)
    omega: float = 0.0  # steering rate (rad/s)

    def as_array(self) -> np.ndarray:
        return np.array([self.s, self.d, self.mu, self.v, self.a, self.delta, self.omega])

    @staticmethod
    def from_array(x) -> "VehicleState":
        return VehicleState(*(float(v) for v in x))


@dataclass(frozen=True)
class ControlInput:
    jerk: float = 0.0  # m/s^3
    steer: float = 0.0  # rad/s^2

    def as_array(self) -> np.ndarray:
        return np.array([self.jerk, self.steer])


@dataclass(frozen=True)
class GlobalPose:
    x: float
    y: float
    theta: float  # rad


def drift_f(x, kappa: float, geom: VehicleGeometry = VehicleGeometry()) -> np.ndarray:
    """Drift vector f(x) at frozen curvature kappa."""
    x = np.asarray(x, dtype=float)
    s, d, mu, v, a, delta, omega = x
    denom = 1.0 - d * kappa
    if denom <= SINGULARITY_TOL:
        raise SingularityError(f"1 - d*kappa = {denom:.3e} <= {SINGULARITY_TOL}")
    beta = math.atan(geom.l_r / (geom.l_r + geom.l_f) * math.tan(delta))
    cmb = math.cos(mu + beta)
    return np.array([
        v * cmb / denom,
        v * math.sin(mu + beta),
        v / geom.l_r * math.sin(beta) - kappa * v * cmb / denom,
        a,
        0.0,
        omega,
        0.0,
    ])


def rk4_step(x, u, kappa: float, dt: float,
             geom: VehicleGeometry = VehicleGeometry()) -> np.ndarray:
    """Classical RK4 step of x_dot = f(x) + g u with u held constant."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    gu = np.zeros(7)
    gu[IDX_A] = u[0]
    gu[IDX_OMEGA] = u[1]

    def rate(xx):
        return drift_f(xx, kappa, geom) + gu

    k1 = rate(x)
    k2 = rate(x + 0.5 * dt * k1)
    k3 = rate(x + 0.5 * dt * k2)
    k4 = rate(x + dt * k3)
    return x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


# ---------------------------------------------------------------------------
# Reference path
# ---------------------------------------------------------------------------

def estimate_path_geometry(points: np.ndarray, smooth: bool = True):
    """Tangent angles, signed curvatures, and cumulative arclengths of a polyline.

    Tangents come from central differences (one-sided at the ends); curvature
    is the three-point circumradius reciprocal signed by the turn direction
    (positive = curving left).  A 3-tap moving average optionally smooths both.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
        raise PathError("path needs at least two 2-D points")
    seg = np.diff(pts, axis=0)
    seg_len = np.linalg.norm(seg, axis=1)
    if np.any(seg_len < 1e-12):
        raise PathError("path has duplicate consecutive points")
    arclen = np.concatenate([[0.0], np.cumsum(seg_len)])

    n = len(pts)
    tang = np.zeros((n, 2))
    tang[0] = seg[0]
    tang[-1] = seg[-1]
    if n > 2:
        tang[1:-1] = pts[2:] - pts[:-2]
    phi = np.arctan2(tang[:, 1], tang[:, 0])

    kappa = np.zeros(n)
    for i in range(1, n - 1):
        a, b, c = pts[i - 1], pts[i], pts[i + 1]
        ab, bc, ca = b - a, c - b, a - c
        cross = ab[0] * bc[1] - ab[1] * bc[0]
        denom = np.linalg.norm(ab) * np.linalg.norm(bc) * np.linalg.norm(ca)
        kappa[i] = 2.0 * cross / denom if denom > 1e-12 else 0.0
    if n > 2:
        kappa[0] = kappa[1]
        kappa[-1] = kappa[-2]

    if smooth and n > 2:
        phi_u = np.unwrap(phi)
        phi_s = phi_u.copy()
        kappa_s = kappa.copy()
        phi_s[1:-1] = (phi_u[:-2] + phi_u[1:-1] + phi_u[2:]) / 3.0
        kappa_s[1:-1] = (kappa[:-2] + kappa[1:-1] + kappa[2:]) / 3.0
        phi = np.arctan2(np.sin(phi_s), np.cos(phi_s))
        kappa = kappa_s

    return phi, kappa, arclen


@dataclass(frozen=True)
class ReferencePath:
    points: np.ndarray  # (N, 2)
    tangent_angles: np.ndarray  # (N,)
    curvatures: np.ndarray  # (N,)
    arclengths: np.ndarray  # (N,), strictly increasing
    gamma: float  # advance threshold (m)

    @staticmethod
    def from_points(points, gamma: float, smooth: bool = True) -> "ReferencePath":
        if gamma <= 0:
            raise PathError("gamma must be > 0")
        pts = np.asarray(points, dtype=float)
        phi, kappa, arclen = estimate_path_geometry(pts, smooth=smooth)
        return ReferencePath(pts, phi, kappa, arclen, gamma)

    def __len__(self) -> int:
        return len(self.points)

    def nearest_index(self, p) -> int:
        d = np.linalg.norm(self.points - np.asarray(p, dtype=float), axis=1)
        return int(np.argmin(d))  # ties: smallest index

    def curvature_at(self, s: float) -> float:
        return float(np.interp(s, self.arclengths, self.curvatures))

    def normal(self, i: int) -> np.ndarray:
        phi = self.tangent_angles[i]
        return np.array([-math.sin(phi), math.cos(phi)])

    def tangent(self, i: int) -> np.ndarray:
        phi = self.tangent_angles[i]
        return np.array([math.cos(phi), math.sin(phi)])


def update_reference_index(p, path: ReferencePath, i_prev: int) -> int:
    """Advance the tracked point by one while within gamma, else re-snap globally.

    The advance case is checked first.  A drift guard re-snaps whenever the
    advanced point would end up farther than the global nearest distance
    plus gamma (possible when point spacing exceeds the per-step motion).
    """
    if len(path) == 0:
        raise PathError("empty path")
    if not 0 <= i_prev < len(path):
        raise PathError(f"reference index {i_prev} out of range")
    p = np.asarray(p, dtype=float)
    dists = np.linalg.norm(path.points - p, axis=1)
    if dists[i_prev] <= path.gamma:
        cand = min(i_prev + 1, len(path) - 1)
        if dists[cand] <= dists.min() + path.gamma:
            return cand
    return int(np.argmin(dists))


def frenet_to_global(x, path: ReferencePath, i: int) -> GlobalPose:
    """Map a Frenet state to a global pose using the frame at point i.

    The along-path residual s - s_i is carried along the frozen tangent so
    the pose does not jitter when the tracked index oscillates around the
    true nearest point.
    """
    if not 0 <= i < len(path):
        raise PathError(f"reference index {i} out of range")
    x = np.asarray(x, dtype=float)
    residual = x[IDX_S] - path.arclengths[i]
    pos = path.points[i] + residual * path.tangent(i) + x[IDX_D] * path.normal(i)
    return GlobalPose(float(pos[0]), float(pos[1]),
                      float(path.tangent_angles[i] + x[IDX_MU]))


def project_to_path(path: ReferencePath, pose: GlobalPose):
    """Nearest-point projection of a global pose: (index, s, d, mu)."""
    i = path.nearest_index((pose.x, pose.y))
    rel = np.array([pose.x, pose.y]) - path.points[i]
    d = float(rel @ path.normal(i))
    s = float(path.arclengths[i] + rel @ path.tangent(i))
    mu = float(pose.theta - path.tangent_angles[i])
    mu = math.atan2(math.sin(mu), math.cos(mu))
    return i, s, d, mu


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------

@dataclass
class Trajectory:
    """Uniformly sampled closed-loop run: states at t_k, controls applied on [t_k, t_k+1)."""

    times: np.ndarray  # (N,)
    states: np.ndarray  # (N, 7)
    controls: np.ndarray  # (N, 2), last row zero
    poses: np.ndarray  # (N, 3) global x, y, theta
    ref_indices: np.ndarray  # (N,) int

    def __post_init__(self):
        n = len(self.times)
        if not (len(self.states) == len(self.controls) == len(self.poses) == len(self.ref_indices) == n):
            raise ValueError("trajectory arrays must have equal length")

    def __len__(self) -> int:
        return len(self.times)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    def state(self, k: int) -> VehicleState:
        return VehicleState.from_array(self.states[k])

    def pose(self, k: int) -> GlobalPose:
        return GlobalPose(*self.poses[k])
