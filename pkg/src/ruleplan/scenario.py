"""Scenario files: map geometry, ego setup, scripted instances, priority
structure, and parameter overrides.

A scenario is one JSON document.  Instances follow open-loop scripts: a
polyline traversed at constant speed from a start time, holding the final
pose once the script is exhausted.  Everything numeric defaults to the
standard parameter set in :mod:`ruleplan.config`.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import (
    ALL_RULES,
    DEFAULT_PRIORITY_CLASSES,
    Limits,
    PlannerConfig,
    RuleParams,
    VehicleGeometry,
)
from .dynamics import VehicleState
from .geometry import Footprint, polyline_lateral
from .rules import PriorityStructure

INSTANCE_KINDS = ("pedestrian", "parked_vehicle", "active_vehicle")
SCRIPT_BOUNDS_MARGIN = 30.0  # m beyond the corridor bounding box


class ScenarioError(ValueError):
    """Scenario validation failure; the message names the offending field."""


@dataclass(frozen=True)
class Lane:
    centerline: np.ndarray  # (N, 2)
    width: float  # m


@dataclass(frozen=True)
class MapSpec:
    corridor: Lane  # drivable area
    lanes: tuple[Lane, ...]
    ego_lane: int


@dataclass(frozen=True)
class MotionScript:
    points: np.ndarray  # (N, 2), N >= 1
    speed: float = 0.0  # m/s along the polyline
    start_time: float = 0.0  # s
    heading: float | None = None  # required when the script cannot define one

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] != 2:
            raise ScenarioError("script.points must be a list of 2-D points")
        if self.speed < 0:
            raise ScenarioError("script.speed must be >= 0")

    def _arclengths(self) -> np.ndarray:
        if len(self.points) == 1:
            return np.zeros(1)
        seg = np.linalg.norm(np.diff(self.points, axis=0), axis=1)
        return np.concatenate([[0.0], np.cumsum(seg)])

    def pose_at(self, t: float) -> tuple[float, float, float]:
        """(x, y, heading) at time t; holds the last pose after exhaustion."""
        pts = self.points
        if len(pts) == 1 or self.speed == 0.0:
            x, y = pts[0]
            return float(x), float(y), float(self.heading or 0.0)
        arcs = self._arclengths()
        arc = np.clip(self.speed * (t - self.start_time), 0.0, arcs[-1])
        x = float(np.interp(arc, arcs, pts[:, 0]))
        y = float(np.interp(arc, arcs, pts[:, 1]))
        seg_idx = min(int(np.searchsorted(arcs, arc, side="right")), len(pts) - 1)
        d = pts[seg_idx] - pts[seg_idx - 1]
        heading = math.atan2(d[1], d[0]) if np.linalg.norm(d) > 1e-12 else (self.heading or 0.0)
        return x, y, float(heading)


@dataclass(frozen=True)
class Instance:
    id: str
    kind: str  # pedestrian | parked_vehicle | active_vehicle
    script: MotionScript
    footprint: Footprint | None = None  # vehicles
    radius: float | None = None  # pedestrians

    def __post_init__(self):
        if self.kind not in INSTANCE_KINDS:
            raise ScenarioError(f"instance {self.id!r}: unknown type {self.kind!r}")
        if self.kind == "pedestrian" and (self.radius is None or self.radius <= 0):
            raise ScenarioError(f"instance {self.id!r}: pedestrian needs a positive radius")
        if self.kind != "pedestrian" and self.footprint is None:
            raise ScenarioError(f"instance {self.id!r}: vehicle needs a footprint")


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    map: MapSpec
    ego_state: VehicleState
    ego_footprint: Footprint
    instances: tuple[Instance, ...]
    priority: PriorityStructure
    enabled_rules: tuple[str, ...]
    params: RuleParams
    limits: Limits
    geometry: VehicleGeometry
    planner: PlannerConfig

    def instances_of(self, kind: str) -> tuple[Instance, ...]:
        return tuple(i for i in self.instances if i.kind == kind)

    @property
    def ego_lane(self) -> Lane:
        return self.map.lanes[self.map.ego_lane]


def propagate_instances(spec: ScenarioSpec, t: float) -> dict[str, tuple[float, float, float]]:
    """Frozen (x, y, heading) of every instance at time t."""
    return {inst.id: inst.script.pose_at(t) for inst in spec.instances}


# ---------------------------------------------------------------------------
# JSON loading
# ---------------------------------------------------------------------------

def _require(data: dict, key: str, path: str):
    if key not in data:
        raise ScenarioError(f"missing required field {path}.{key}")
    return data[key]


def _lane_from(data: dict, path: str) -> Lane:
    pts = np.asarray(_require(data, "centerline", path), dtype=float)
    if pts.ndim != 2 or len(pts) < 2 or pts.shape[1] != 2:
        raise ScenarioError(f"{path}.centerline must be >= 2 two-dimensional points")
    width = float(_require(data, "width", path))
    if width <= 0:
        raise ScenarioError(f"{path}.width must be > 0")
    return Lane(pts, width)


def _merged(cls, base, overrides: dict | None, path: str):
    if not overrides:
        return base
    known = {f.name for f in base.__dataclass_fields__.values()} if hasattr(base, "__dataclass_fields__") else set()
    bad = set(overrides) - known
    if bad:
        raise ScenarioError(f"{path}: unknown field(s) {sorted(bad)}")
    try:
        return replace(base, **overrides)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{path}: {exc}") from exc


def scenario_from_dict(data: dict) -> ScenarioSpec:
    name = data.get("name", "unnamed")
    map_data = _require(data, "map", "scenario")
    corridor = _lane_from(_require(map_data, "corridor", "map"), "map.corridor")
    lanes_data = _require(map_data, "lanes", "map")
    if not lanes_data:
        raise ScenarioError("map.lanes must contain at least one lane")
    lanes = tuple(_lane_from(l, f"map.lanes[{i}]") for i, l in enumerate(lanes_data))
    ego_lane = int(map_data.get("ego_lane", 0))
    if not 0 <= ego_lane < len(lanes):
        raise ScenarioError("map.ego_lane out of range")

    ego_data = _require(data, "ego", "scenario")
    state_over = ego_data.get("state", {})
    bad = set(state_over) - set(VehicleState().__dataclass_fields__)
    if bad:
        raise ScenarioError(f"ego.state: unknown field(s) {sorted(bad)}")
    ego_state = VehicleState(**{k: float(v) for k, v in state_over.items()})
    fp_data = ego_data.get("footprint", {})
    geometry = _merged(VehicleGeometry(), VehicleGeometry(), data.get("vehicle"), "vehicle")
    ego_fp = Footprint(length=float(fp_data.get("length", geometry.length)),
                       width=float(fp_data.get("width", geometry.width)))

    params = _merged(RuleParams(), RuleParams(), data.get("parameters"), "parameters")
    limits = _merged(Limits(), Limits(), data.get("limits"), "limits")

    planner_over = dict(data.get("planner", {}))
    if "T" in data:
        planner_over.setdefault("T", float(data["T"]))
    if "dt" in data:
        planner_over.setdefault("dt", float(data["dt"]))
    planner = _merged(PlannerConfig(), PlannerConfig(), planner_over, "planner")

    instances = []
    for i, inst in enumerate(data.get("instances", [])):
        path = f"instances[{i}]"
        kind = _require(inst, "type", path)
        script_data = _require(inst, "script", path)
        script = MotionScript(
            points=np.asarray(_require(script_data, "points", f"{path}.script"), dtype=float),
            speed=float(script_data.get("speed", 0.0)),
            start_time=float(script_data.get("start_time", 0.0)),
            heading=(float(script_data["heading"]) if "heading" in script_data else None),
        )
        fp = None
        if "footprint" in inst:
            fp = Footprint(length=float(inst["footprint"]["length"]),
                           width=float(inst["footprint"]["width"]))
        elif kind != "pedestrian":
            fp = Footprint(length=geometry.length, width=geometry.width)
        radius = float(inst.get("radius", params.ped_radius)) if kind == "pedestrian" else None
        instances.append(Instance(id=str(inst.get("id", f"inst{i}")), kind=kind,
                                  script=script, footprint=fp, radius=radius))

    if "priority" in data:
        classes = tuple(frozenset(cls) for cls in data["priority"])
        priority = PriorityStructure(classes)
    else:
        priority = PriorityStructure(DEFAULT_PRIORITY_CLASSES)

    enabled = tuple(data.get("rules", ALL_RULES))
    for r in enabled:
        if r not in ALL_RULES:
            raise ScenarioError(f"rules: unknown rule id {r!r}")
    for r in enabled:
        if r not in priority.rules():
            raise ScenarioError(f"rules: enabled rule {r!r} missing from the priority structure")

    spec = ScenarioSpec(
        name=name, map=MapSpec(corridor, lanes, ego_lane),
        ego_state=ego_state, ego_footprint=ego_fp,
        instances=tuple(instances), priority=priority, enabled_rules=enabled,
        params=params, limits=limits, geometry=geometry, planner=planner,
    )
    _validate_semantics(spec)
    return spec


def _validate_semantics(spec: ScenarioSpec):
    # ego must start on the map
    lane = spec.ego_lane
    arcs = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(lane.centerline, axis=0), axis=1))])
    if not 0.0 <= spec.ego_state.s <= arcs[-1]:
        raise ScenarioError("ego.state.s outside the ego lane centerline")
    ego_x = float(np.interp(spec.ego_state.s, arcs, lane.centerline[:, 0]))
    ego_y = float(np.interp(spec.ego_state.s, arcs, lane.centerline[:, 1]))
    off = polyline_lateral(spec.map.corridor.centerline, (ego_x, ego_y))
    if abs(off + spec.ego_state.d) > spec.map.corridor.width / 2 + 1e-9:
        raise ScenarioError("ego initial pose outside the drivable corridor")

    # scripts must stay near the scene
    pts = spec.map.corridor.centerline
    lo = pts.min(axis=0) - SCRIPT_BOUNDS_MARGIN
    hi = pts.max(axis=0) + SCRIPT_BOUNDS_MARGIN
    for inst in spec.instances:
        p = inst.script.points
        if np.any(p < lo) or np.any(p > hi):
            raise ScenarioError(f"instances[{inst.id}].script.points leave the scene bounds")

    lim = spec.limits
    st = spec.ego_state
    checks = [
        ("v", lim.v_min, lim.v_max), ("a", lim.a_min, lim.a_max),
        ("delta", lim.delta_min, lim.delta_max), ("omega", lim.omega_min, lim.omega_max),
    ]
    for field_name, lo_v, hi_v in checks:
        val = getattr(st, field_name)
        if not lo_v - 1e-9 <= val <= hi_v + 1e-9:
            raise ScenarioError(f"ego.state.{field_name} outside limits [{lo_v}, {hi_v}]")


def load_scenario(path: str | Path) -> ScenarioSpec:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON ({exc})") from exc
    return scenario_from_dict(data)


def scenario_to_dict(spec: ScenarioSpec) -> dict:
    def lane_dict(lane: Lane):
        return {"centerline": lane.centerline.tolist(), "width": lane.width}

    out = {
        "name": spec.name,
        "map": {
            "corridor": lane_dict(spec.map.corridor),
            "lanes": [lane_dict(l) for l in spec.map.lanes],
            "ego_lane": spec.map.ego_lane,
        },
        "ego": {
            "state": {k: getattr(spec.ego_state, k) for k in spec.ego_state.__dataclass_fields__},
            "footprint": {"length": spec.ego_footprint.length, "width": spec.ego_footprint.width},
        },
        "instances": [],
        "priority": [sorted(cls) for cls in spec.priority.classes],
        "rules": list(spec.enabled_rules),
        "parameters": {k: getattr(spec.params, k) for k in spec.params.__dataclass_fields__},
        "limits": {k: getattr(spec.limits, k) for k in spec.limits.__dataclass_fields__},
        "vehicle": {k: getattr(spec.geometry, k) for k in spec.geometry.__dataclass_fields__},
        "planner": {k: getattr(spec.planner, k) for k in spec.planner.__dataclass_fields__},
    }
    for inst in spec.instances:
        d = {
            "id": inst.id, "type": inst.kind,
            "script": {"points": inst.script.points.tolist(), "speed": inst.script.speed,
                       "start_time": inst.script.start_time},
        }
        if inst.script.heading is not None:
            d["script"]["heading"] = inst.script.heading
        if inst.footprint is not None:
            d["footprint"] = {"length": inst.footprint.length, "width": inst.footprint.width}
        if inst.radius is not None:
            d["radius"] = inst.radius
        out["instances"].append(d)
    return out


def save_scenario(spec: ScenarioSpec, path: str | Path):
    Path(path).write_text(json.dumps(scenario_to_dict(spec), indent=2))
