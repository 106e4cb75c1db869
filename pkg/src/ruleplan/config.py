"""Default parameters: vehicle geometry, state/control limits, rule thresholds,
and planner tuning knobs.

Numeric defaults follow the standard simulation parameter set for this
problem family; everything is overridable from the scenario file.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace


@dataclass(frozen=True)
class VehicleGeometry:
    l_f: float = 2.0  # CoG to front (m)
    l_r: float = 2.0  # CoG to rear (m)
    length: float = 4.0  # footprint length (m)
    width: float = 1.8  # footprint width (m)

    def __post_init__(self):
        for name in ("l_f", "l_r", "length", "width"):
            if getattr(self, name) <= 0:
                raise ValueError(f"vehicle geometry: {name} must be > 0")


@dataclass(frozen=True)
class Limits:
    """State and control bounds (12 scalars, componentwise min < max)."""

    v_min: float = 0.0  # m/s
    v_max: float = 10.0  # m/s
    a_min: float = -3.5  # m/s^2
    a_max: float = 3.5  # m/s^2
    delta_min: float = -1.0  # rad
    delta_max: float = 1.0  # rad
    omega_min: float = -0.5  # rad/s
    omega_max: float = 0.5  # rad/s
    jerk_min: float = -4.0  # m/s^3
    jerk_max: float = 4.0  # m/s^3
    steer_min: float = -2.0  # rad/s^2
    steer_max: float = 2.0  # rad/s^2

    def __post_init__(self):
        pairs = [
            ("v_min", "v_max"),
            ("a_min", "a_max"),
            ("delta_min", "delta_max"),
            ("omega_min", "omega_max"),
            ("jerk_min", "jerk_max"),
            ("steer_min", "steer_max"),
        ]
        for lo, hi in pairs:
            if not getattr(self, lo) < getattr(self, hi):
                raise ValueError(f"limits: require {lo} < {hi}")

    @property
    def u_lo(self):
        return (self.jerk_min, self.steer_min)

    @property
    def u_hi(self):
        return (self.jerk_max, self.steer_max)


@dataclass(frozen=True)
class RuleParams:
    """Thresholds and normalizers of the eight rule families."""

    d_1: float = 1.0  # pedestrian clearance base (m)
    eta_1: float = 0.067  # pedestrian clearance speed gain (s)
    v_max_s: float = 7.0  # scenario speed limit (m/s)
    v_min_s: float = 3.0  # scenario minimum speed (m/s)
    a_max_s: float = 2.5  # comfort accel bound (m/s^2)
    a_lat_s: float = 1.75  # comfort lateral accel bound (m/s^2)
    a_lat_m: float = 3.5  # feasible lateral accel, normalizer (m/s^2)
    d_7: float = 0.3  # parked-vehicle clearance base (m)
    eta_7: float = 0.13  # parked-vehicle clearance speed gain (s)
    d_8_l: float = 0.5  # active-vehicle left clearance base (m)
    d_8_r: float = 0.5  # active-vehicle right clearance base (m)
    d_8_f: float = 1.0  # active-vehicle front clearance base (m)
    eta_8_l: float = 0.036  # (s)
    eta_8_r: float = 0.036  # (s)
    eta_8_f: float = 2.0  # (s)
    d_max: float = 2.0  # infringement normalizer for lane/drivable rules (m)
    ped_radius: float = 0.3  # pedestrian footprint disk radius (m)


# Priority classes, lowest priority first.  Overridable per scenario.
DEFAULT_PRIORITY_CLASSES: tuple[frozenset[str], ...] = (
    frozenset({"r6"}),
    frozenset({"r5"}),
    frozenset({"r3"}),
    frozenset({"r4"}),
    frozenset({"r2", "r7", "r8"}),
    frozenset({"r1"}),
)

ALL_RULES = ("r1", "r2", "r3", "r4", "r5", "r6", "r7", "r8")


@dataclass(frozen=True)
class PlannerConfig:
    dt: float = 0.1  # step (s)
    T: float = 20.0  # horizon (s)
    epsilon: float = 4.0  # CLF convergence rate (critically damps the speed loop at k1 = 1)
    p_e: float = 100.0  # CLF relaxation weight (large enough to avoid slack-induced limit cycles)
    p_base: float = 10.0  # rule relaxation weight = p_base ** class priority
    kappa: float = 1.0  # linear class-K coefficient, all chain links
    v_d: float = 4.0  # desired speed (m/s)
    k1: float = 1.0  # speed-loop feedback gain
    c0: float = 1.0  # longitudinal CLF weight
    c_lat: float = 1.0  # lateral CLF weight
    k_d: float = 0.5  # lateral offset gain (1/m)
    k_mu: float = 2.0  # heading gain
    k_delta: float = 3.0  # steering gain
    gamma: float = 1.0  # reference-point advance threshold (m)
    path_spacing: float = 0.5  # reference polyline resample step (m)
    delta_zero_tol: float = 1e-4  # |delta_i| below this counts as never relaxed
    score_eps: float = 1e-6  # violation threshold on total scores
    cover_beta: float = 2.0  # disk-count vs lateral-error trade-off
    cover_z_max: int = 8  # disk search bound
    qp_tol: float = 1e-8
    qp_max_iter: int = 200
    singularity_tol: float = 1e-6  # lower bound on 1 - d*kappa

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("planner: dt must be > 0")
        if self.T <= 0 or (self.T / self.dt) % 1.0 > 1e-9:
            raise ValueError("planner: T must be a positive multiple of dt")
        if self.p_e <= 0 or self.p_base <= 0:
            raise ValueError("planner: relaxation weights must be > 0")
        if self.kappa <= 0:
            raise ValueError("planner: class-K coefficient must be > 0")

    def with_overrides(self, **kw) -> "PlannerConfig":
        return replace(self, **kw)


def dataclass_from_dict(cls, data: dict, path: str):
    """Build a config dataclass from a JSON dict, rejecting unknown keys."""
    known = {f.name for f in fields(cls)}
    bad = set(data) - known
    if bad:
        raise ValueError(f"{path}: unknown field(s) {sorted(bad)}")
    return cls(**data)
