"""Per-step QP assembly, closed-loop simulation, and recursive rule relaxation.

At every step the state and all exogenous quantities (instance poses, the
tracked path frame, speed-evaluated clearance pads) are frozen, every
enabled barrier family is compiled into a linear row over the decision
vector (u_jerk, u_steer, delta_e, relaxation slacks), and one small QP is
solved.  A relaxation level marks a set of rules whose rows receive slack
columns; the recursive algorithm walks the sorted power set of priority
classes and returns the first level whose whole-horizon simulation stays
feasible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import qp as qpmod
from .barriers import (
    VEHICLE,
    ClfSpec,
    DegreeOverflowError,
    HocbfSpec,
    build_tracking_clf,
    compile_hocbf,
    relative_degree,
    tracking_clf_params,
    vehicle_field,
)
from .config import PlannerConfig
from .dynamics import (
    ReferencePath,
    SingularityError,
    Trajectory,
    frenet_to_global,
    rk4_step,
    update_reference_index,
)
from .geometry import (
    ClearanceSpec,
    DiskCover,
    Footprint,
    disk_centers,
    disk_longitudinal_offsets,
    min_radius,
    optimize_cover,
    polyline_lateral,
)
from .rules import PriorityStructure, relaxed_rules_of, sorted_relaxation_sets
from .scenario import ScenarioError, ScenarioSpec, propagate_instances
from .scoring import score_trajectory

HARD_RESIDUAL_TOL = 1e-6

STATUS_OK = "ok"
STATUS_INFEASIBLE = "infeasible"
STATUS_ABORTED = "aborted"


@dataclass
class StepContext:
    """Everything frozen at the start of one control interval."""

    t: float
    x: np.ndarray
    i_ref: int
    point: np.ndarray  # tracked reference point (2,)
    phi: float  # tangent angle there
    s_ref: float  # arclength there
    kappa: float  # curvature there
    lane_off: float  # lateral offset of the tracked point from the ego lane centerline
    corridor_off: float  # same relative to the corridor centerline
    instances: dict[str, tuple[float, float, float]]
    v: float  # speed clamped into limits, used for pad evaluation
    cache: dict = field(default_factory=dict)


@dataclass
class Family:
    """One constraint row family: a barrier spec plus its per-step parameters."""

    key: str
    rule: Optional[str]  # owning rule id; None marks a state-limit row
    hspec: HocbfSpec
    params_fn: Callable[[StepContext], tuple]


@dataclass
class StepMeta:
    slack_keys: tuple[str, ...]
    row_families: tuple[str, ...]
    row_rules: tuple[Optional[str], ...]
    row_relaxed: tuple[bool, ...]


@dataclass
class LevelOutcome:
    status: str
    relaxed_rules: frozenset[str]
    trajectory: Optional[Trajectory] = None
    delta_e: Optional[np.ndarray] = None
    rule_deltas: dict[str, np.ndarray] = field(default_factory=dict)
    fail_time: Optional[float] = None
    fail_reason: str = ""
    init_chain_violations: tuple[str, ...] = ()
    min_hard_residual: float = math.inf


@dataclass
class LevelAttempt:
    index: int  # 1-based position in the sorted power set
    classes: frozenset[int]
    rules: frozenset[str]
    status: str
    fail_time: Optional[float] = None


@dataclass
class PlanResult:
    status: str
    relaxed_classes: frozenset[int] = frozenset()
    relaxed_rules: frozenset[str] = frozenset()
    level: int = 0
    trajectory: Optional[Trajectory] = None
    report: object = None  # ViolationReport on success
    delta_e: Optional[np.ndarray] = None
    rule_deltas: dict[str, np.ndarray] = field(default_factory=dict)
    r_relax: tuple[str, ...] = ()
    level_log: tuple[LevelAttempt, ...] = ()
    init_chain_violations: tuple[str, ...] = ()
    min_hard_residual: float = math.inf


def resample_polyline(points: np.ndarray, spacing: float) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    arcs = np.concatenate([[0.0], np.cumsum(seg)])
    n = max(int(math.ceil(arcs[-1] / spacing)) + 1, 2)
    ss = np.linspace(0.0, arcs[-1], n)
    return np.stack([np.interp(ss, arcs, pts[:, 0]), np.interp(ss, arcs, pts[:, 1])], axis=1)


def clearance_specs(spec: ScenarioSpec) -> dict[str, ClearanceSpec]:
    """Per-rule pad functions: uniform half-threshold pads for pedestrian and
    parked-vehicle clearance, directional pads for active-vehicle clearance."""
    p = spec.params
    return {
        "r1": ClearanceSpec(front=(p.d_1 / 2, p.eta_1 / 2), back=(p.d_1 / 2, p.eta_1 / 2),
                            left=(p.d_1 / 2, p.eta_1 / 2), right=(p.d_1 / 2, p.eta_1 / 2)),
        "r7": ClearanceSpec(front=(p.d_7 / 2, p.eta_7 / 2), back=(p.d_7 / 2, p.eta_7 / 2),
                            left=(p.d_7 / 2, p.eta_7 / 2), right=(p.d_7 / 2, p.eta_7 / 2)),
        "r8": ClearanceSpec(front=(p.d_8_f, p.eta_8_f), back=(0.0, 0.0),
                            left=(p.d_8_l, p.eta_8_l), right=(p.d_8_r, p.eta_8_r)),
    }


@dataclass
class CompiledScenario:
    spec: ScenarioSpec
    cfg: PlannerConfig
    ref_path: ReferencePath
    x0: np.ndarray
    families: tuple[Family, ...]
    clf: ClfSpec
    ego_covers: dict[str, DiskCover]  # per clearance rule + "zero" (no pads)
    instance_covers: dict[str, DiskCover]
    pad_specs: dict[str, ClearanceSpec]

    @property
    def priority(self) -> PriorityStructure:
        return self.spec.priority

    def system_params(self, ctx: StepContext) -> tuple[float, float, float]:
        return (ctx.kappa, self.spec.geometry.l_r, self.spec.geometry.l_f)

    def make_context(self, t: float, x: np.ndarray, i_ref: int,
                     path: Optional[ReferencePath] = None) -> StepContext:
        path = path or self.ref_path
        point = path.points[i_ref]
        lim = self.spec.limits
        return StepContext(
            t=t, x=np.asarray(x, dtype=float), i_ref=i_ref, point=point,
            phi=float(path.tangent_angles[i_ref]), s_ref=float(path.arclengths[i_ref]),
            kappa=float(path.curvatures[i_ref]),
            lane_off=polyline_lateral(self.spec.ego_lane.centerline, point),
            corridor_off=polyline_lateral(self.spec.map.corridor.centerline, point),
            instances=propagate_instances(self.spec, t),
            v=float(np.clip(x[3], lim.v_min, lim.v_max)),
        )


def _build_family(key, rule, field_name, kappa_coeff, params_fn,
                  relaxable, probe_x, probe_params, sys_params):
    field_obj, nominal = vehicle_field(field_name)
    try:
        m = relative_degree(VEHICLE, field_obj, probe_x, tuple(sys_params) + tuple(probe_params))
    except DegreeOverflowError:
        m = nominal  # control-free at the probe state (e.g. zero curvature)
    compiled = compile_hocbf(VEHICLE, field_obj, m)
    hspec = HocbfSpec(field=field_obj, compiled=compiled,
                      chain=(kappa_coeff,) * m, relaxable=relaxable,
                      rule=rule, label=key)
    return Family(key=key, rule=rule, hspec=hspec, params_fn=params_fn)


def compile_scenario(spec: ScenarioSpec) -> CompiledScenario:
    cfg = spec.planner
    lim = spec.limits
    pads = clearance_specs(spec)
    for rule, cspec in pads.items():
        cspec.validate(lim.v_min, lim.v_max)

    path_pts = resample_polyline(spec.ego_lane.centerline, cfg.path_spacing)
    ref_path = ReferencePath.from_points(path_pts, gamma=cfg.gamma)
    x0 = spec.ego_state.as_array()

    # disk covers: ego per clearance rule (speed-dependent pad ranges), ego
    # with zero pads for the lane/drivable rows, and one per vehicle instance
    ego_covers: dict[str, DiskCover] = {}
    for rule in ("r1", "r7", "r8"):
        lo, hi = pads[rule].bounds(lim.v_min, lim.v_max)
        ego_covers[rule] = optimize_cover(spec.ego_footprint, lo, hi,
                                          cfg.cover_beta, cfg.cover_z_max)
    zero = (0.0, 0.0, 0.0, 0.0)
    ego_covers["zero"] = optimize_cover(spec.ego_footprint, zero, zero,
                                        cfg.cover_beta, cfg.cover_z_max)
    instance_covers: dict[str, DiskCover] = {}
    for inst in spec.instances:
        if inst.kind != "pedestrian":
            instance_covers[inst.id] = optimize_cover(inst.footprint, zero, zero,
                                                      cfg.cover_beta, cfg.cover_z_max)

    r0 = ego_covers["zero"].radius
    lane_bound = spec.ego_lane.width / 2 - r0
    corridor_bound = spec.map.corridor.width / 2 - r0
    if "r3" in spec.enabled_rules and lane_bound <= 0:
        raise ScenarioError("ego lane too narrow for the disk approximation")
    if "r2" in spec.enabled_rules and corridor_bound <= 0:
        raise ScenarioError("corridor too narrow for the disk approximation")

    enabled = set(spec.enabled_rules)
    kc = cfg.kappa
    prm = spec.params
    fam_defs: list[tuple] = []  # (key, rule, field, params_fn, relaxable)

    # state limits, never relaxed
    for name, bound in (
        ("v_upper", lim.v_max), ("v_lower", lim.v_min),
        ("a_upper", lim.a_max), ("a_lower", lim.a_min),
        ("delta_upper", lim.delta_max), ("delta_lower", lim.delta_min),
        ("omega_upper", lim.omega_max), ("omega_lower", lim.omega_min),
    ):
        fam_defs.append((f"limit:{name}", None, name,
                         (lambda b: lambda ctx: (b,))(bound), False))

    if "r4" in enabled:
        fam_defs.append(("r4:v_max_s", "r4", "v_upper",
                         lambda ctx: (prm.v_max_s,), True))
    if "r5" in enabled:
        fam_defs.append(("r5:v_min_s", "r5", "v_lower",
                         lambda ctx: (prm.v_min_s,), True))
    if "r6" in enabled:
        fam_defs.append(("r6:a_upper", "r6", "a_upper", lambda ctx: (prm.a_max_s,), True))
        fam_defs.append(("r6:a_lower", "r6", "a_lower", lambda ctx: (-prm.a_max_s,), True))
        fam_defs.append(("r6:alat_upper", "r6", "alat_upper", lambda ctx: (prm.a_lat_s,), True))
        fam_defs.append(("r6:alat_lower", "r6", "alat_lower", lambda ctx: (prm.a_lat_s,), True))

    # lane / drivable-area rows: every zero-pad ego disk center stays within
    # the corridor half-width minus the covering radius
    z0 = ego_covers["zero"].z
    offs0 = disk_longitudinal_offsets(spec.ego_footprint, zero, z0)
    if "r3" in enabled:
        for j, e_off in enumerate(offs0):
            for side, fname in (("upper", "lane_upper"), ("lower", "lane_lower")):
                fam_defs.append((f"r3:disk{j}:{side}", "r3", fname,
                                 (lambda e: lambda ctx: (e, ctx.lane_off, lane_bound))(e_off),
                                 True))
    if "r2" in enabled:
        for j, e_off in enumerate(offs0):
            for side, fname in (("upper", "lane_upper"), ("lower", "lane_lower")):
                fam_defs.append((f"r2:disk{j}:{side}", "r2", fname,
                                 (lambda e: lambda ctx: (e, ctx.corridor_off, corridor_bound))(e_off),
                                 True))

    def ego_disk_geometry(ctx: StepContext, rule: str):
        """(longitudinal offsets, lateral midline offset, radius) at frozen speed."""
        key = ("ego_disks", rule)
        if key not in ctx.cache:
            pvals = pads[rule].evaluate(ctx.v)
            cover = ego_covers[rule]
            offs = disk_longitudinal_offsets(spec.ego_footprint, pvals, cover.z)
            lat = (pvals[2] - pvals[3]) / 2.0
            ctx.cache[key] = (offs, lat, min_radius(spec.ego_footprint, pvals, cover.z))
        return ctx.cache[key]

    def instance_disks(ctx: StepContext, inst):
        key = ("inst_disks", inst.id)
        if key not in ctx.cache:
            ix, iy, ih = ctx.instances[inst.id]
            cover = instance_covers[inst.id]
            ctx.cache[key] = disk_centers(ix, iy, ih, inst.footprint, zero, cover.z)
        return ctx.cache[key]

    def disk_params(rule, inst, j, k):
        def build(ctx: StepContext):
            offs, lat, r_ego = ego_disk_geometry(ctx, rule)
            if inst.kind == "pedestrian":
                cx, cy, _ = ctx.instances[inst.id]
                r_i = inst.radius
            else:
                centers = instance_disks(ctx, inst)
                cx, cy = centers[k]
                r_i = instance_covers[inst.id].radius
            return (ctx.point[0], ctx.point[1], ctx.phi, ctx.s_ref,
                    offs[j], lat, cx, cy, r_ego + r_i)
        return build

    kind_rule = {"pedestrian": "r1", "parked_vehicle": "r7", "active_vehicle": "r8"}
    for inst in spec.instances:
        rule = kind_rule[inst.kind]
        if rule not in enabled:
            continue
        z_ego = ego_covers[rule].z
        z_inst = 1 if inst.kind == "pedestrian" else instance_covers[inst.id].z
        for j in range(z_ego):
            for k in range(z_inst):
                fam_defs.append((f"{rule}:{inst.id}:e{j}i{k}", rule, "disk_pair",
                                 disk_params(rule, inst, j, k), True))

    # probe the relative degrees at the initial state
    compiled = CompiledScenario(
        spec=spec, cfg=cfg, ref_path=ref_path, x0=x0, families=(),
        clf=build_tracking_clf(cfg.epsilon), ego_covers=ego_covers,
        instance_covers=instance_covers, pad_specs=pads)
    i0 = ref_path.nearest_index(
        _initial_global(x0, ref_path))
    ctx0 = compiled.make_context(0.0, x0, i0)
    sysp = compiled.system_params(ctx0)

    families = tuple(
        _build_family(key, rule, fname, kc, pfn, relaxable,
                      x0, pfn(ctx0), sysp)
        for key, rule, fname, pfn, relaxable in fam_defs
    )
    compiled.families = families
    return compiled


def _initial_global(x0: np.ndarray, path: ReferencePath) -> np.ndarray:
    i = int(np.searchsorted(path.arclengths, x0[0]))
    i = min(max(i, 0), len(path) - 1)
    pose = frenet_to_global(x0, path, i)
    return np.array([pose.x, pose.y])


# ---------------------------------------------------------------------------
# Step QP
# ---------------------------------------------------------------------------

def build_step_qp(compiled: CompiledScenario, ctx: StepContext,
                  relaxed_rules: frozenset[str], include_rules: bool = True,
                  v_d: Optional[float] = None):
    """Assemble the QP over (u_jerk, u_steer, delta_e, slacks) at one step."""
    cfg = compiled.cfg
    spec = compiled.spec
    sysp = compiled.system_params(ctx)

    rows = []
    slack_keys: list[str] = []
    slack_weights: list[float] = []
    for fam in compiled.families:
        if fam.rule is not None and not include_rules:
            continue
        slack_key = None
        if fam.rule is not None and fam.rule in relaxed_rules:
            slack_key = fam.key
            slack_keys.append(fam.key)
            slack_weights.append(cfg.p_base ** compiled.priority.priority(fam.rule))
        rows.append((fam, fam.hspec.row(ctx.x, fam.params_fn(ctx), sysp, slack_key)))

    clf_params = tracking_clf_params(cfg.v_d if v_d is None else v_d, cfg)
    clf_row_ = compiled.clf.row(ctx.x, clf_params, sysp)

    n_var = 3 + len(slack_keys)
    col = {key: 3 + i for i, key in enumerate(slack_keys)}
    weights = np.concatenate([[1.0, 1.0, cfg.p_e], np.asarray(slack_weights)])
    H = 2.0 * np.diag(weights)
    f = np.zeros(n_var)

    A = np.zeros((len(rows) + 1, n_var))
    b = np.zeros(len(rows) + 1)
    for r, (fam, row) in enumerate(rows):
        # lg . u + const + slack >= 0   ->   -lg . u - slack <= const
        A[r, 0:2] = -row.u_coeffs
        if row.slack is not None:
            A[r, col[row.slack]] = -row.slack_coeff
        b[r] = row.constant
    # CLF: lg . u + const <= delta_e
    A[-1, 0:2] = clf_row_.u_coeffs
    A[-1, 2] = clf_row_.slack_coeff
    b[-1] = -clf_row_.constant

    lim = spec.limits
    lb = np.concatenate([[lim.jerk_min, lim.steer_min], np.full(n_var - 2, -np.inf)])
    ub = np.concatenate([[lim.jerk_max, lim.steer_max], np.full(n_var - 2, np.inf)])

    meta = StepMeta(
        slack_keys=tuple(slack_keys),
        row_families=tuple(fam.key for fam, _ in rows),
        row_rules=tuple(fam.rule for fam, _ in rows),
        row_relaxed=tuple(row.slack is not None for _, row in rows),
    )
    problem = qpmod.QpProblem(H=H, f=f, A=A, b=b, lb=lb, ub=ub)
    return problem, meta, rows


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------

def simulate_with_relaxation(compiled: CompiledScenario,
                             relaxed_rules: frozenset[str],
                             include_rules: bool = True,
                             ref_path: Optional[ReferencePath] = None,
                             x0: Optional[np.ndarray] = None,
                             v_d_fn: Optional[Callable[[StepContext], float]] = None,
                             ) -> LevelOutcome:
    """Closed-loop run over [0, T] with the given rules relaxed."""
    cfg = compiled.cfg
    path = ref_path if ref_path is not None else compiled.ref_path
    x = np.array(compiled.x0 if x0 is None else x0, dtype=float)
    n_steps = int(round(cfg.T / cfg.dt))

    i_ref = path.nearest_index(_initial_global(x, path))
    times = np.arange(n_steps + 1) * cfg.dt
    states = np.zeros((n_steps + 1, 7))
    controls = np.zeros((n_steps + 1, 2))
    poses = np.zeros((n_steps + 1, 3))
    ref_idx = np.zeros(n_steps + 1, dtype=int)
    delta_e = np.zeros(n_steps + 1)
    rule_deltas: dict[str, np.ndarray] = {
        r: np.zeros(n_steps + 1)
        for r in sorted(relaxed_rules)
    }
    init_violations: list[str] = []
    min_hard_residual = math.inf

    for k in range(n_steps + 1):
        t = float(times[k])
        ctx = compiled.make_context(t, x, i_ref, path)
        pose = frenet_to_global(x, path, i_ref)
        states[k] = x
        poses[k] = (pose.x, pose.y, pose.theta)
        ref_idx[k] = i_ref

        if k == 0 and include_rules:
            sysp = compiled.system_params(ctx)
            for fam in compiled.families:
                psis = fam.hspec.psi_values(x, fam.params_fn(ctx), sysp)
                for order, val in enumerate(psis):
                    if val < -1e-9:
                        init_violations.append(f"{fam.key}: psi_{order} = {val:.3g}")

        if k == n_steps:
            break

        problem, meta, rows = build_step_qp(
            compiled, ctx, relaxed_rules, include_rules,
            v_d=None if v_d_fn is None else v_d_fn(ctx))
        sol = qpmod.solve(problem, tol=cfg.qp_tol, max_iter=cfg.qp_max_iter)
        if sol.status == qpmod.STATUS_MAX_ITER:
            return LevelOutcome(STATUS_ABORTED, relaxed_rules, fail_time=t,
                                fail_reason="qp iteration limit")
        if sol.status != qpmod.STATUS_OPTIMAL:
            return LevelOutcome(STATUS_INFEASIBLE, relaxed_rules, fail_time=t,
                                fail_reason="qp infeasible",
                                init_chain_violations=tuple(init_violations))

        u = sol.x[:2]
        controls[k] = u
        delta_e[k] = max(sol.x[2], 0.0)
        for key, idx in zip(meta.slack_keys, range(3, 3 + len(meta.slack_keys))):
            rule = key.split(":", 1)[0]
            rule_deltas[rule][k] = max(rule_deltas[rule][k], max(float(sol.x[idx]), 0.0))
        for (fam, row), relaxed in zip(rows, meta.row_relaxed):
            if not relaxed:
                min_hard_residual = min(min_hard_residual,
                                        float(row.u_coeffs @ u + row.constant))

        try:
            x = rk4_step(x, u, ctx.kappa, cfg.dt, compiled.spec.geometry)
        except SingularityError:
            return LevelOutcome(STATUS_INFEASIBLE, relaxed_rules, fail_time=t,
                                fail_reason="frame singularity",
                                init_chain_violations=tuple(init_violations))
        next_pose = frenet_to_global(x, path, i_ref)
        i_ref = update_reference_index((next_pose.x, next_pose.y), path, i_ref)

    traj = Trajectory(times=times, states=states, controls=controls,
                      poses=poses, ref_indices=ref_idx)
    return LevelOutcome(STATUS_OK, relaxed_rules, trajectory=traj,
                        delta_e=delta_e, rule_deltas=rule_deltas,
                        init_chain_violations=tuple(init_violations),
                        min_hard_residual=min_hard_residual)


def algorithm1(compiled: CompiledScenario,
               priority: Optional[PriorityStructure] = None) -> PlanResult:
    """Walk the sorted relaxation sets; return the first feasible level.

    Rules whose slack stays below the zero tolerance for the whole horizon
    are pruned from the reported relaxed set.
    """
    spec = compiled.spec
    cfg = compiled.cfg
    ps = priority if priority is not None else spec.priority
    enabled = frozenset(spec.enabled_rules)
    log: list[LevelAttempt] = []

    for idx, class_set in enumerate(sorted_relaxation_sets(ps), start=1):
        rules = frozenset(relaxed_rules_of(ps, class_set)) & enabled
        outcome = simulate_with_relaxation(compiled, rules)
        log.append(LevelAttempt(index=idx, classes=class_set, rules=rules,
                                status=outcome.status, fail_time=outcome.fail_time))
        if outcome.status == STATUS_ABORTED:
            return PlanResult(status=STATUS_ABORTED, relaxed_classes=class_set,
                              relaxed_rules=rules, level=idx, level_log=tuple(log))
        if outcome.status != STATUS_OK:
            continue

        report = score_trajectory(outcome.trajectory, spec, compiled.ref_path)
        r_relax = tuple(sorted(
            r for r in rules
            if float(np.max(outcome.rule_deltas.get(r, np.zeros(1)))) > cfg.delta_zero_tol))
        return PlanResult(
            status=STATUS_OK, relaxed_classes=class_set, relaxed_rules=rules,
            level=idx, trajectory=outcome.trajectory, report=report,
            delta_e=outcome.delta_e, rule_deltas=outcome.rule_deltas,
            r_relax=r_relax, level_log=tuple(log),
            init_chain_violations=outcome.init_chain_violations,
            min_hard_residual=outcome.min_hard_residual)

    return PlanResult(status=STATUS_INFEASIBLE, level_log=tuple(log))
