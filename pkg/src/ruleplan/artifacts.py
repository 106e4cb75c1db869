"""Run artifacts: trajectory CSV, scores report JSON, and an SVG scene plot.

The CSV preserves full float precision (repr round-trip), so re-scoring a
stored trajectory reproduces the report exactly.  The SVG uses map
coordinates in meters with trajectory segments color-coded per violated
rule.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .dynamics import ReferencePath, Trajectory
from .planner import PlanResult
from .rules import ViolationReport
from .scenario import ScenarioSpec

CSV_COLUMNS = ["t", "s", "d", "mu", "v", "a", "delta", "omega",
               "x_e", "y_e", "theta_e", "u_jerk", "u_steer", "delta_e"]

RULE_COLORS = {
    "r1": "#d62728",  # pedestrian clearance
    "r2": "#9467bd",  # drivable area
    "r3": "#e377c2",  # lane keeping
    "r4": "#ff7f0e",  # speed limit
    "r5": "#1f77b4",  # minimum speed
    "r6": "#8c564b",  # comfort
    "r7": "#7f7f7f",  # parked-vehicle clearance
    "r8": "#2ca02c",  # active-vehicle clearance
}


def write_trajectory_csv(path, traj: Trajectory, delta_e=None, rule_deltas=None):
    rule_deltas = rule_deltas or {}
    delta_cols = sorted(rule_deltas)
    header = CSV_COLUMNS + [f"delta_{r}" for r in delta_cols]
    n = len(traj)
    de = np.zeros(n) if delta_e is None else np.asarray(delta_e)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k in range(n):
            row = [traj.times[k], *traj.states[k], *traj.poses[k],
                   traj.controls[k][0], traj.controls[k][1], de[k]]
            row += [rule_deltas[r][k] for r in delta_cols]
            w.writerow([repr(float(v)) for v in row])


def read_trajectory_csv(path, ref_path: ReferencePath | None = None):
    """(Trajectory, delta_e, rule_deltas) from a stored CSV."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(v) for v in row] for row in reader])
    if header[:len(CSV_COLUMNS)] != CSV_COLUMNS:
        raise ValueError(f"{path}: unexpected trajectory CSV columns")
    col = {name: i for i, name in enumerate(header)}
    times = data[:, col["t"]]
    states = data[:, [col[c] for c in ("s", "d", "mu", "v", "a", "delta", "omega")]]
    poses = data[:, [col[c] for c in ("x_e", "y_e", "theta_e")]]
    controls = data[:, [col["u_jerk"], col["u_steer"]]]
    if ref_path is not None:
        ref_idx = np.array([ref_path.nearest_index(p) for p in poses[:, :2]])
    else:
        ref_idx = np.zeros(len(times), dtype=int)
    traj = Trajectory(times=times, states=states, controls=controls,
                      poses=poses, ref_indices=ref_idx)
    delta_e = data[:, col["delta_e"]]
    rule_deltas = {name[len("delta_"):]: data[:, i] for name, i in col.items()
                   if name.startswith("delta_") and name != "delta_e"}
    return traj, delta_e, rule_deltas


def report_to_dict(report: ViolationReport, eps: float) -> dict:
    return {
        "totals": {k: report.totals[k] for k in sorted(report.totals)},
        "instances": {r: dict(sorted(v.items()))
                      for r, v in sorted(report.instance_scores.items())},
        "violated": list(report.violated(eps)),
    }


def result_to_dict(result: PlanResult, eps: float) -> dict:
    out = {
        "status": result.status,
        "level": result.level,
        "relaxed_classes": sorted(result.relaxed_classes),
        "relaxed_rules": sorted(result.relaxed_rules),
        "r_relax": list(result.r_relax),
        "levels": [
            {"index": a.index, "rules": sorted(a.rules), "status": a.status,
             "fail_time": a.fail_time}
            for a in result.level_log
        ],
        "initial_chain_violations": list(result.init_chain_violations),
        "min_hard_residual": (None if math.isinf(result.min_hard_residual)
                              else result.min_hard_residual),
    }
    if result.report is not None:
        out["scores"] = report_to_dict(result.report, eps)
    if result.rule_deltas:
        out["max_rule_deltas"] = {r: float(np.max(d)) for r, d in sorted(result.rule_deltas.items())}
    return out


def write_report_json(path, payload: dict):
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


# ---------------------------------------------------------------------------
# SVG
# ---------------------------------------------------------------------------

def _rect_points(cx, cy, heading, half_l, half_w):
    c, s = math.cos(heading), math.sin(heading)
    pts = []
    for ex, ey in ((half_l, half_w), (-half_l, half_w), (-half_l, -half_w), (half_l, -half_w)):
        pts.append((cx + c * ex - s * ey, cy + s * ex + c * ey))
    return pts


def _poly(points, **attrs):
    body = " ".join(f"{x:.3f},{y:.3f}" for x, y in points)
    a = " ".join(f'{k.replace("_", "-")}="{v}"' for k, v in attrs.items())
    return f'<polygon points="{body}" {a}/>'


def _polyline(points, **attrs):
    body = " ".join(f"{x:.3f},{y:.3f}" for x, y in points)
    a = " ".join(f'{k.replace("_", "-")}="{v}"' for k, v in attrs.items())
    return f'<polyline fill="none" points="{body}" {a}/>'


def scene_svg(spec: ScenarioSpec, trajectories, eps: float = 1e-6) -> str:
    """SVG scene: corridor, lanes, instances at t = 0, and trajectories.

    ``trajectories`` is a list of (Trajectory, ViolationReport | None, style)
    tuples; segments whose instantaneous violation exceeds eps are overdrawn
    in the violated rule's color.
    """
    corridor = spec.map.corridor
    pts = corridor.centerline
    lo = pts.min(axis=0) - np.array([5.0, corridor.width])
    hi = pts.max(axis=0) + np.array([5.0, corridor.width])
    width, height = hi - lo

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{lo[0]:.1f} {-hi[1]:.1f} '
        f'{width:.1f} {height:.1f}" width="{width * 8:.0f}" height="{height * 8:.0f}">',
        # y axis points up in map coordinates
        '<g transform="scale(1,-1)">',
    ]

    def offset_line(line, offset):
        pts_ = np.asarray(line, dtype=float)
        seg = np.diff(pts_, axis=0)
        seg = seg / np.linalg.norm(seg, axis=1, keepdims=True)
        normals = np.vstack([seg, seg[-1:]])
        normals = np.stack([-normals[:, 1], normals[:, 0]], axis=1)
        return pts_ + offset * normals

    def band(lane, color):
        ring = np.vstack([offset_line(lane.centerline, lane.width / 2),
                          offset_line(lane.centerline, -lane.width / 2)[::-1]])
        return _poly([tuple(p) for p in ring], fill=color, stroke="none")

    parts.append(band(corridor, "#e8e8e8"))
    for lane in spec.map.lanes:
        parts.append(_polyline([tuple(p) for p in lane.centerline],
                               stroke="#bbbbbb", stroke_width="0.05",
                               stroke_dasharray="1,1"))
        for side in (1, -1):
            edge = offset_line(lane.centerline, side * lane.width / 2)
            parts.append(_polyline([tuple(p) for p in edge], stroke="#999999",
                                   stroke_width="0.06"))

    for inst in spec.instances:
        x, y, h = inst.script.pose_at(0.0)
        if inst.kind == "pedestrian":
            parts.append(f'<circle cx="{x:.3f}" cy="{y:.3f}" r="{inst.radius:.3f}" '
                         f'fill="#cc4444" stroke="black" stroke-width="0.03"/>')
        else:
            color = "#666666" if inst.kind == "parked_vehicle" else "#4466cc"
            parts.append(_poly(_rect_points(x, y, h, inst.footprint.length / 2,
                                            inst.footprint.width / 2),
                               fill=color, stroke="black", stroke_width="0.04"))

    for traj, report, style in trajectories:
        xy = [tuple(p[:2]) for p in traj.poses]
        parts.append(_polyline(xy, stroke=style.get("stroke", "black"),
                               stroke_width=style.get("width", "0.12"),
                               stroke_dasharray=style.get("dash", "none")))
        if report is not None:
            for rule, series in sorted(report.series.items()):
                mask = np.asarray(series) > eps
                if not mask.any():
                    continue
                color = RULE_COLORS[rule]
                k = 0
                n = len(mask)
                while k < n:
                    if mask[k]:
                        j = k
                        while j + 1 < n and mask[j + 1]:
                            j += 1
                        seg = xy[k:j + 2]
                        if len(seg) >= 2:
                            parts.append(_polyline(seg, stroke=color, stroke_width="0.22",
                                                   stroke_opacity="0.85"))
                        k = j + 1
                    else:
                        k += 1
        # footprint outline every 2 s
        step = max(int(round(2.0 / traj.dt)), 1) if traj.dt > 0 else len(traj)
        for k in range(0, len(traj), step):
            x, y, th = traj.poses[k]
            parts.append(_poly(_rect_points(x, y, th, spec.ego_footprint.length / 2,
                                            spec.ego_footprint.width / 2),
                               fill="none", stroke=style.get("stroke", "black"),
                               stroke_width="0.03", stroke_opacity="0.5"))

    parts.append("</g></svg>")
    return "\n".join(parts)


def write_scene_svg(path, spec: ScenarioSpec, trajectories, eps: float = 1e-6):
    Path(path).write_text(scene_svg(spec, trajectories, eps))
