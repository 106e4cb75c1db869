"""Pass/fail evaluation of externally supplied candidate trajectories.

A candidate is either a waypoint polyline with an optional speed profile
(realized by simulating the tracking controller under control bounds and
state limits, with no rule constraints) or a previously recorded trajectory
(replayed verbatim after a dynamic-consistency check).  The candidate is
scored, and a counterexample search re-runs the recursive relaxation
restricted to priority classes at or below the candidate's worst violated
priority.  The candidate fails only when that search produces a strictly
better trajectory.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dynamics import (
    GlobalPose,
    ReferencePath,
    Trajectory,
    frenet_to_global,
    project_to_path,
    rk4_step,
    update_reference_index,
)
from .planner import (
    STATUS_OK,
    CompiledScenario,
    PlanResult,
    algorithm1,
    resample_polyline,
    simulate_with_relaxation,
)
from .rules import SECOND_BETTER, ViolationReport, compare_trajectories
from .scoring import score_trajectory

DIVERGENCE_LIMIT = 5.0  # m of lateral tracking error
REPLAY_TOL = 1e-9


class CandidateError(ValueError):
    """Candidate cannot be realized as a dynamically feasible trajectory."""


@dataclass
class CandidateInput:
    waypoints: Optional[np.ndarray] = None  # (N, 2)
    speeds: Optional[np.ndarray] = None  # scalar profile per waypoint
    speed: Optional[float] = None  # constant target speed
    recorded: Optional[Trajectory] = None  # replayable full recording

    def __post_init__(self):
        if self.recorded is None:
            if self.waypoints is None:
                raise CandidateError("candidate needs waypoints or a recorded trajectory")
            pts = np.asarray(self.waypoints, dtype=float)
            if pts.ndim != 2 or len(pts) < 2 or pts.shape[1] != 2:
                raise CandidateError("candidate waypoints must be >= 2 two-dimensional points")
            self.waypoints = pts
            if self.speeds is not None:
                self.speeds = np.asarray(self.speeds, dtype=float)
                if self.speeds.shape != (len(pts),):
                    raise CandidateError("candidate speeds must match the waypoint count")


@dataclass
class Verdict:
    passed: bool
    candidate_report: ViolationReport
    realized: Trajectory
    highest_priority: int = 0
    counterexample: Optional[PlanResult] = None
    comparison: Optional[int] = None  # candidate vs counterexample

    @property
    def label(self) -> str:
        return "PASS" if self.passed else "FAIL"


def verify_replay(traj: Trajectory, compiled: CompiledScenario) -> bool:
    """Re-integrate the recorded controls; exact reproduction marks the
    recording as dynamically consistent."""
    cfg = compiled.cfg
    path = compiled.ref_path
    n = len(traj)
    expected_n = int(round(cfg.T / cfg.dt)) + 1
    if n != expected_n or abs(traj.dt - cfg.dt) > 1e-12:
        return False
    x = traj.states[0].copy()
    pose0 = frenet_to_global(x, path, min(int(np.searchsorted(path.arclengths, x[0])), len(path) - 1))
    i_ref = path.nearest_index((pose0.x, pose0.y))
    for k in range(n - 1):
        if np.max(np.abs(x - traj.states[k])) > REPLAY_TOL:
            return False
        kappa = float(path.curvatures[i_ref])
        try:
            x = rk4_step(x, traj.controls[k], kappa, cfg.dt, compiled.spec.geometry)
        except Exception:
            return False
        pose = frenet_to_global(x, path, i_ref)
        i_ref = update_reference_index((pose.x, pose.y), path, i_ref)
    return np.max(np.abs(x - traj.states[-1])) <= REPLAY_TOL


def track_candidate(candidate: CandidateInput, compiled: CompiledScenario) -> tuple[Trajectory, ReferencePath]:
    """Realize the candidate as a dynamically feasible trajectory.

    Returns the realization and the reference path its Frenet states refer
    to (the scenario path for replays, the candidate polyline otherwise).
    """
    spec = compiled.spec
    cfg = compiled.cfg

    if candidate.recorded is not None:
        if not verify_replay(candidate.recorded, compiled):
            raise CandidateError("recorded trajectory is not dynamically consistent "
                                 "with the scenario dynamics and grid")
        return candidate.recorded, compiled.ref_path

    cand_pts = resample_polyline(candidate.waypoints, cfg.path_spacing)
    cand_path = ReferencePath.from_points(cand_pts, gamma=cfg.gamma)

    # express the scenario's initial state in the candidate path frame
    ego0 = spec.ego_state.as_array()
    i0 = min(int(np.searchsorted(compiled.ref_path.arclengths, ego0[0])),
             len(compiled.ref_path) - 1)
    pose0 = frenet_to_global(ego0, compiled.ref_path, i0)
    _, s_c, d_c, mu_c = project_to_path(cand_path, pose0)
    x0 = ego0.copy()
    x0[0], x0[1], x0[2] = s_c, d_c, mu_c

    if candidate.speeds is not None:
        arcs_wp = np.concatenate(
            [[0.0], np.cumsum(np.linalg.norm(np.diff(candidate.waypoints, axis=0), axis=1))])

        def v_d_fn(ctx):
            return float(np.interp(ctx.s_ref, arcs_wp, candidate.speeds))
    elif candidate.speed is not None:
        def v_d_fn(ctx):
            return float(candidate.speed)
    else:
        v_d_fn = None  # planner default desired speed

    outcome = simulate_with_relaxation(compiled, frozenset(), include_rules=False,
                                       ref_path=cand_path, x0=x0, v_d_fn=v_d_fn)
    if outcome.status != STATUS_OK:
        raise CandidateError(f"candidate realization failed: {outcome.fail_reason}")
    traj = outcome.trajectory
    if np.max(np.abs(traj.states[:, 1])) > DIVERGENCE_LIMIT:
        raise CandidateError("candidate tracking diverged beyond the lateral error limit")
    return traj, cand_path


def evaluate(candidate: CandidateInput, compiled: CompiledScenario) -> Verdict:
    """Score the candidate and search for a strictly better trajectory."""
    spec = compiled.spec
    cfg = compiled.cfg
    realized, scoring_path = track_candidate(candidate, compiled)
    report = score_trajectory(realized, spec, scoring_path)

    ps = spec.priority
    worst = report.highest_priority(ps, cfg.score_eps)
    if worst == 0:
        return Verdict(passed=True, candidate_report=report, realized=realized)

    restricted = ps.restrict(worst)
    search = algorithm1(compiled, priority=restricted)
    if search.status != STATUS_OK:
        # nothing feasible among the allowed relaxations: no better trajectory
        return Verdict(passed=True, candidate_report=report, realized=realized,
                       highest_priority=worst)

    cmp = compare_trajectories(report, search.report, ps, cfg.score_eps)
    if cmp == SECOND_BETTER:
        return Verdict(passed=False, candidate_report=report, realized=realized,
                       highest_priority=worst, counterexample=search, comparison=cmp)
    return Verdict(passed=True, candidate_report=report, realized=realized,
                   highest_priority=worst, counterexample=search, comparison=cmp)
