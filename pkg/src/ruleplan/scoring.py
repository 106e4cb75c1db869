"""Trajectory scoring: evaluates the enabled rules' violation metrics over a
sampled trajectory using true footprint geometry (not the disk
over-approximations used for control).
"""
from __future__ import annotations

import numpy as np

from .dynamics import ReferencePath, Trajectory
from .geometry import (
    directional_distances,
    footprint_rect,
    infringement_distances,
    point_rect_distance,
    rect_rect_distance,
)
from .rules import ViolationReport, instance_violation, instant_violation, total_violation
from .scenario import ScenarioSpec


def sample_measurements(spec: ScenarioSpec, ref_path: ReferencePath,
                        pose, state, t: float) -> dict[str, dict]:
    """Raw per-rule measurements for one sample (used by scoring and plots)."""
    x, y, theta = pose
    v, a, s = state[3], state[4], state[0]
    ego_rect = footprint_rect(x, y, theta, spec.ego_footprint)
    kappa = ref_path.curvature_at(s)
    out: dict[str, dict] = {
        "r4": {"v": v},
        "r5": {"v": v},
        "r6": {"a": a, "a_lat": kappa * v * v},
    }
    d_l, d_r = infringement_distances(ego_rect, spec.map.corridor.centerline,
                                      spec.map.corridor.width, spec.params.d_max)
    out["r2"] = {"d_left": d_l, "d_right": d_r}
    lane = spec.ego_lane
    d_l, d_r = infringement_distances(ego_rect, lane.centerline, lane.width,
                                      spec.params.d_max)
    out["r3"] = {"d_left": d_l, "d_right": d_r}

    for inst in spec.instances:
        ix, iy, ih = inst.script.pose_at(t)
        if inst.kind == "pedestrian":
            d_fp = point_rect_distance(ego_rect, (ix, iy)) - inst.radius
            out.setdefault("r1", {})[inst.id] = {"d_fp": d_fp, "v": v}
        elif inst.kind == "parked_vehicle":
            rect = footprint_rect(ix, iy, ih, inst.footprint)
            out.setdefault("r7", {})[inst.id] = {"d_fp": rect_rect_distance(ego_rect, rect), "v": v}
        else:
            rect = footprint_rect(ix, iy, ih, inst.footprint)
            dl, dr, df = directional_distances(ego_rect, rect)
            out.setdefault("r8", {})[inst.id] = {"d_l": dl, "d_r": dr, "d_f": df, "v": v}
    return out


def score_trajectory(traj: Trajectory, spec: ScenarioSpec,
                     ref_path: ReferencePath) -> ViolationReport:
    n = len(traj)
    prm, lim = spec.params, spec.limits
    enabled = set(spec.enabled_rules)
    per_instance: dict[str, dict[str, np.ndarray]] = {}
    single: dict[str, np.ndarray] = {}

    for k in range(n):
        ms = sample_measurements(spec, ref_path, traj.poses[k], traj.states[k],
                                 float(traj.times[k]))
        for rule in ("r2", "r3", "r4", "r5", "r6"):
            if rule not in enabled:
                continue
            single.setdefault(rule, np.zeros(n))[k] = instant_violation(rule, ms[rule], prm, lim)
        for rule in ("r1", "r7", "r8"):
            if rule not in enabled or rule not in ms:
                continue
            store = per_instance.setdefault(rule, {})
            for inst_id, m in ms[rule].items():
                store.setdefault(inst_id, np.zeros(n))[k] = instant_violation(rule, m, prm, lim)

    totals: dict[str, float] = {}
    instance_scores: dict[str, dict[str, float]] = {}
    series: dict[str, np.ndarray] = {}
    for rule in spec.enabled_rules:
        if rule in single:
            rho = instance_violation(rule, single[rule], traj.times)
            instance_scores[rule] = {"ego": rho}
            totals[rule] = total_violation(rule, {"ego": rho})
            series[rule] = single[rule]
        elif rule in per_instance:
            rhos = {iid: instance_violation(rule, s, traj.times)
                    for iid, s in per_instance[rule].items()}
            instance_scores[rule] = rhos
            totals[rule] = total_violation(rule, rhos)
            series[rule] = np.max(np.stack(list(per_instance[rule].values())), axis=0)
        else:
            totals[rule] = 0.0
            instance_scores[rule] = {}
            series[rule] = np.zeros(n)

    return ViolationReport(totals=totals, instance_scores=instance_scores,
                           series=series, times=traj.times.copy())
