"""Traffic rules r1-r8: statements, three-level violation metrics, priority
structure, trajectory comparison, and the sorted relaxation power set.

Each rule scores a trajectory at three levels, all in [0, 1]:

  * instantaneous: normalized squared excess beyond the statement threshold
    at one sample, clamped to [0, 1];
  * instance: aggregation over time (max for pedestrian/parked clearance,
    RMS via trapezoidal integration for the single-instance rules, plain
    time average for active-vehicle clearance);
  * total: aggregation over instances (root-mean over instances for the
    clearance rules, identity otherwise).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import ALL_RULES, Limits, RuleParams

CLEARANCE_RULES = ("r1", "r2", "r3", "r7", "r8")
MAX_CLASSES = 12


def _clip01(x: float) -> float:
    return 0.0 if x < 0.0 else (1.0 if x > 1.0 else x)


# ---------------------------------------------------------------------------
# Priority structure
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PriorityStructure:
    """Equivalence classes of rules under a total order, lowest priority first."""

    classes: tuple[frozenset[str], ...]

    def __post_init__(self):
        seen: set[str] = set()
        if not self.classes:
            raise ValueError("priority structure needs at least one class")
        for i, cls in enumerate(self.classes):
            if not cls:
                raise ValueError(f"priority class {i + 1} is empty")
            for r in cls:
                if r not in ALL_RULES:
                    raise ValueError(f"unknown rule id {r!r}")
                if r in seen:
                    raise ValueError(f"rule {r!r} appears in more than one class")
                seen.add(r)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def rules(self) -> frozenset[str]:
        out: set[str] = set()
        for cls in self.classes:
            out |= cls
        return frozenset(out)

    def priority(self, rule: str) -> int:
        for i, cls in enumerate(self.classes):
            if rule in cls:
                return i + 1
        raise KeyError(f"rule {rule!r} not in priority structure")

    def class_rules(self, index: int) -> frozenset[str]:
        return self.classes[index]

    def restrict(self, max_priority: int) -> "PriorityStructure":
        """Sub-structure with classes of priority <= max_priority."""
        if not 1 <= max_priority <= self.n_classes:
            raise ValueError("priority out of range")
        return PriorityStructure(self.classes[:max_priority])


def sorted_relaxation_sets(ps: PriorityStructure) -> list[frozenset[int]]:
    """Power set of class indices, sorted low-to-high priority.

    Subsets compare by their priority multisets sorted descending, shortest
    prefix first, which puts the empty set first and any subset containing a
    class after every subset whose maximum priority is lower.
    """
    n = ps.n_classes
    if n > MAX_CLASSES:
        raise ValueError(f"{n} classes would enumerate 2^{n} relaxation sets")
    subsets = []
    for mask in range(1 << n):
        idxs = frozenset(i for i in range(n) if mask >> i & 1)
        key = tuple(sorted((i + 1 for i in idxs), reverse=True))
        subsets.append((key, idxs))
    subsets.sort(key=lambda kv: kv[0])
    return [idxs for _, idxs in subsets]


def relaxed_rules_of(ps: PriorityStructure, class_set: frozenset[int]) -> frozenset[str]:
    out: set[str] = set()
    for i in class_set:
        out |= ps.classes[i]
    return frozenset(out)


# ---------------------------------------------------------------------------
# Instantaneous metrics and statements (scalar forms)
# ---------------------------------------------------------------------------

def instant_violation(rule: str, m: dict, prm: RuleParams, lim: Limits) -> float:
    """Instantaneous violation score from raw sample measurements.

    Measurement keys by rule: r1/r7 ``d_fp``, ``v``; r2/r3 ``d_left``,
    ``d_right``; r4/r5 ``v``; r6 ``a``, ``a_lat``; r8 ``d_l``, ``d_r``,
    ``d_f``, ``v``.
    """
    if rule == "r1":
        thr = prm.d_1 + m["v"] * prm.eta_1
        return _clip01((thr - m["d_fp"]) / (prm.d_1 + lim.v_max * prm.eta_1)) ** 2
    if rule == "r7":
        thr = prm.d_7 + m["v"] * prm.eta_7
        return _clip01((thr - m["d_fp"]) / (prm.d_7 + lim.v_max * prm.eta_7)) ** 2
    if rule in ("r2", "r3"):
        return _clip01((m["d_left"] + m["d_right"]) / (2.0 * prm.d_max)) ** 2
    if rule == "r4":
        return _clip01((m["v"] - prm.v_max_s) / lim.v_max) ** 2
    if rule == "r5":
        return _clip01((prm.v_min_s - m["v"]) / (prm.v_min_s - lim.v_min)) ** 2
    if rule == "r6":
        lon = max(0.0, (abs(m["a"]) - prm.a_max_s) / lim.a_max)
        lat = max(0.0, (abs(m["a_lat"]) - prm.a_lat_s) / prm.a_lat_m)
        return _clip01(lon + lat) ** 2
    if rule == "r8":
        terms = 0.0
        for key, base, rate in (("d_l", prm.d_8_l, prm.eta_8_l),
                                ("d_r", prm.d_8_r, prm.eta_8_r),
                                ("d_f", prm.d_8_f, prm.eta_8_f)):
            thr = base + m["v"] * rate
            terms += _clip01((thr - m[key]) / (base + lim.v_max * rate)) ** 2
        return terms / 3.0
    raise KeyError(f"unknown rule {rule!r}")


def statement_holds(rule: str, m: dict, prm: RuleParams, lim: Limits) -> bool:
    """Boolean statement of the rule at one sample (h(x) >= 0 form)."""
    if rule == "r1":
        return m["d_fp"] >= prm.d_1 + m["v"] * prm.eta_1
    if rule == "r7":
        return m["d_fp"] >= prm.d_7 + m["v"] * prm.eta_7
    if rule in ("r2", "r3"):
        return m["d_left"] + m["d_right"] <= 0.0
    if rule == "r4":
        return m["v"] <= prm.v_max_s
    if rule == "r5":
        return m["v"] >= prm.v_min_s
    if rule == "r6":
        return abs(m["a"]) <= prm.a_max_s and abs(m["a_lat"]) <= prm.a_lat_s
    if rule == "r8":
        return (m["d_l"] >= prm.d_8_l + m["v"] * prm.eta_8_l
                and m["d_r"] >= prm.d_8_r + m["v"] * prm.eta_8_r
                and m["d_f"] >= prm.d_8_f + m["v"] * prm.eta_8_f)
    raise KeyError(f"unknown rule {rule!r}")


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------

def instance_violation(rule: str, series: np.ndarray, times: np.ndarray) -> float:
    """Aggregate an instantaneous series over the trajectory duration."""
    series = np.asarray(series, dtype=float)
    times = np.asarray(times, dtype=float)
    if series.size == 0 or series.size != times.size:
        raise ValueError("empty or mismatched violation series")
    if rule in ("r1", "r7"):
        return float(np.max(series))
    duration = float(times[-1] - times[0])
    if duration <= 0:
        return float(series[0])
    mean = float(np.trapezoid(series, times)) / duration
    if rule == "r8":
        return mean
    return math.sqrt(max(mean, 0.0))


def total_violation(rule: str, instance_scores: dict[str, float]) -> float:
    """Aggregate instance scores; clearance rules use a root-mean over instances."""
    if rule in ("r1", "r7", "r8"):
        if not instance_scores:
            return 0.0
        return math.sqrt(sum(instance_scores.values()) / len(instance_scores))
    if not instance_scores:
        return 0.0
    if len(instance_scores) != 1:
        raise ValueError(f"{rule} is a single-instance rule")
    return next(iter(instance_scores.values()))


# ---------------------------------------------------------------------------
# Reports and comparison
# ---------------------------------------------------------------------------

@dataclass
class ViolationReport:
    totals: dict[str, float]
    instance_scores: dict[str, dict[str, float]]
    series: dict[str, np.ndarray]  # per rule, max over instances at each sample
    times: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def violated(self, eps: float) -> tuple[str, ...]:
        return tuple(r for r in ALL_RULES if self.totals.get(r, 0.0) > eps)

    def highest_priority(self, ps: PriorityStructure, eps: float) -> int:
        """Priority of the worst violated rule, 0 when nothing is violated."""
        worst = 0
        for r in self.violated(eps):
            if r in ps.rules():
                worst = max(worst, ps.priority(r))
        return worst

    def max_score_at(self, ps: PriorityStructure, priority: int, eps: float) -> float:
        scores = [self.totals[r] for r in self.violated(eps)
                  if r in ps.rules() and ps.priority(r) == priority]
        return max(scores) if scores else 0.0


FIRST_BETTER = -1
EQUIVALENT = 0
SECOND_BETTER = 1


def compare_trajectories(rep1: ViolationReport, rep2: ViolationReport,
                         ps: PriorityStructure, eps: float = 1e-6) -> int:
    """Lexicographic comparison: highest violated priority, then the larger
    total score among that priority's violated rules; exact ties are
    equivalent."""
    h1 = rep1.highest_priority(ps, eps)
    h2 = rep2.highest_priority(ps, eps)
    if h1 != h2:
        return FIRST_BETTER if h1 < h2 else SECOND_BETTER
    if h1 == 0:
        return EQUIVALENT
    m1 = rep1.max_score_at(ps, h1, eps)
    m2 = rep2.max_score_at(ps, h2, eps)
    if m1 == m2:
        return EQUIVALENT
    return FIRST_BETTER if m1 < m2 else SECOND_BETTER
