"""Barrier chains and relaxed tracking constraints, compiled to linear rows.

Given a differentiable scalar field b(x) with constraint b >= 0 and relative
degree m under a control-affine system, the chain

    psi_0 = b,   psi_i = psi_{i-1}_dot + kc_i * psi_{i-1}

(linear class-K, coefficients kc_i > 0) yields the per-step condition

    L_f psi_{m-1}(x) + L_g psi_{m-1}(x) u + kc_m * psi_{m-1}(x) >= 0,

which is linear in u once the state (and all frozen per-step parameters:
instance poses, path frame, evaluated clearance pads) is fixed.  The chain
and its Lie derivatives are built symbolically with sympy and lambdified
once per barrier family; scenario-dependent quantities enter as parameters
so the compiled callables are shared across scenarios and steps.

Relaxed CLF rows follow the same pattern with sense <= and a slack column.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import sympy as sp

MAX_DEGREE = 4
DEGREE_TOL = 1e-8

# class-K chain coefficient symbols (shared across families)
K_SYMS = sp.symbols("kc1 kc2 kc3 kc4", positive=True)


class DegreeOverflowError(RuntimeError):
    """No control influence detected up to the maximum supported order."""


@dataclass(frozen=True)
class ControlAffineSystem:
    """Symbolic control-affine system with unit control columns.

    ``control_states[j]`` is the state index whose time derivative equals
    control j (g has a single 1 in that row).
    """

    name: str
    states: tuple[sp.Symbol, ...]
    drift: tuple[sp.Expr, ...]
    control_states: tuple[int, ...]
    params: tuple[sp.Symbol, ...]

    @property
    def n(self) -> int:
        return len(self.states)

    @property
    def q(self) -> int:
        return len(self.control_states)

    def lie_f(self, expr: sp.Expr) -> sp.Expr:
        return sum(sp.diff(expr, x) * f for x, f in zip(self.states, self.drift))


def vehicle_system() -> ControlAffineSystem:
    """Frenet-frame model; curvature and axle lengths are frozen parameters."""
    s, d, mu, v, a, delta, omega = X = sp.symbols("s d mu v a delta omega", real=True)
    kap, l_r, l_f = sp.symbols("kap l_r l_f", real=True)
    beta = sp.atan(l_r / (l_r + l_f) * sp.tan(delta))
    denom = 1 - d * kap
    drift = (
        v * sp.cos(mu + beta) / denom,
        v * sp.sin(mu + beta),
        v / l_r * sp.sin(beta) - kap * v * sp.cos(mu + beta) / denom,
        a,
        sp.Integer(0),
        omega,
        sp.Integer(0),
    )
    return ControlAffineSystem("vehicle", X, drift, (4, 6), (kap, l_r, l_f))


def double_integrator_system() -> ControlAffineSystem:
    x1, x2 = sp.symbols("x1 x2", real=True)
    return ControlAffineSystem("double_integrator", (x1, x2), (x2, sp.Integer(0)), (1,), ())


VEHICLE = vehicle_system()


@dataclass(frozen=True)
class BarrierField:
    """Scalar field b(x; params) defining the constraint b >= 0."""

    name: str
    expr: sp.Expr
    params: tuple[sp.Symbol, ...] = ()


@dataclass
class LinearConstraintRow:
    """One compiled constraint, linear in the decision variables."""

    u_coeffs: np.ndarray  # (q,)
    constant: float
    sense: str  # "ge" (HOCBF) or "le" (CLF)
    slack: Optional[str] = None  # slack column key, None when not relaxable
    slack_coeff: float = 0.0  # +1 for HOCBF relaxation, -1 for the CLF slack
    owner: str = ""  # rule id or family label

    def __post_init__(self):
        if not np.all(np.isfinite(self.u_coeffs)) or not math.isfinite(self.constant):
            raise ValueError(f"non-finite constraint row from {self.owner!r}")


# ---------------------------------------------------------------------------
# Relative degree
# ---------------------------------------------------------------------------

_DEGREE_CACHE: dict = {}


def _degree_fns(system: ControlAffineSystem, field: BarrierField):
    key = (system.name, field.name, sp.srepr(field.expr))
    fns = _DEGREE_CACHE.get(key)
    if fns is None:
        fns = []
        q = field.expr
        args = (system.states, system.params + field.params)
        for _ in range(MAX_DEGREE):
            lg = [sp.diff(q, system.states[ci]) for ci in system.control_states]
            fns.append(sp.lambdify(args, lg, modules="math"))
            q = system.lie_f(q)
        _DEGREE_CACHE[key] = fns
    return fns


def relative_degree(system: ControlAffineSystem, field: BarrierField, x,
                    params: Sequence[float] = (), tol: float = DEGREE_TOL) -> int:
    """Smallest m with a nonzero entry in L_g L_f^{m-1} b at the given state."""
    fns = _degree_fns(system, field)
    xt = tuple(float(v) for v in x)
    pt = tuple(float(v) for v in params)
    for order, fn in enumerate(fns, start=1):
        row = fn(xt, pt)
        if any(abs(c) > tol for c in row):
            return order
    raise DegreeOverflowError(
        f"{field.name}: no control influence up to order {MAX_DEGREE}")


# ---------------------------------------------------------------------------
# HOCBF compilation
# ---------------------------------------------------------------------------

@dataclass
class CompiledHocbf:
    """Lambdified row builder for one barrier family at fixed relative degree."""

    name: str
    system: ControlAffineSystem
    degree: int
    param_syms: tuple[sp.Symbol, ...]  # system params + field params + chain coeffs
    _fn: Callable

    def evaluate(self, x, params: Sequence[float]):
        """(lg_coeffs, constant, psi_values) at a state; psi_values[0] is b."""
        out = self._fn(tuple(float(v) for v in x), tuple(float(v) for v in params))
        q = self.system.q
        lg = np.array(out[:q], dtype=float)
        const = float(out[q])
        psis = tuple(float(v) for v in out[q + 1:])
        return lg, const, psis


_HOCBF_CACHE: dict = {}


def compile_hocbf(system: ControlAffineSystem, field: BarrierField, degree: int) -> CompiledHocbf:
    """Build (and cache) the chain row function for a barrier family."""
    if not 1 <= degree <= MAX_DEGREE:
        raise ValueError(f"relative degree {degree} outside 1..{MAX_DEGREE}")
    key = (system.name, field.name, sp.srepr(field.expr), degree)
    cached = _HOCBF_CACHE.get(key)
    if cached is not None:
        return cached

    psis = [field.expr]
    for i in range(degree - 1):
        psis.append(system.lie_f(psis[-1]) + K_SYMS[i] * psis[-1])
    top = psis[-1]
    lg = [sp.diff(top, system.states[ci]) for ci in system.control_states]
    const = system.lie_f(top) + K_SYMS[degree - 1] * top

    param_syms = system.params + field.params + tuple(K_SYMS[:degree])
    fn = sp.lambdify((system.states, param_syms), (*lg, const, *psis),
                     modules="math", cse=True)
    compiled = CompiledHocbf(field.name, system, degree, param_syms, fn)
    _HOCBF_CACHE[key] = compiled
    return compiled


@dataclass
class HocbfSpec:
    """A barrier family bound to its chain, owner rule, and relaxability."""

    field: BarrierField
    compiled: CompiledHocbf
    chain: tuple[float, ...]  # class-K coefficients kc_1..kc_m, all > 0
    relaxable: bool
    rule: Optional[str] = None  # owning rule id, None for state limits
    label: str = ""

    def __post_init__(self):
        if len(self.chain) != self.compiled.degree:
            raise ValueError("chain length must equal the relative degree")
        if any(k <= 0 for k in self.chain):
            raise ValueError("class-K coefficients must be strictly positive")
        if not self.label:
            self.label = self.field.name

    def row(self, x, field_params: Sequence[float], system_params: Sequence[float],
            slack_key: Optional[str] = None) -> LinearConstraintRow:
        params = tuple(system_params) + tuple(field_params) + self.chain
        lg, const, _ = self.compiled.evaluate(x, params)
        if slack_key is not None and not self.relaxable:
            raise ValueError(f"{self.label}: slack requested on a non-relaxable row")
        return LinearConstraintRow(
            u_coeffs=lg, constant=const, sense="ge",
            slack=slack_key, slack_coeff=1.0 if slack_key is not None else 0.0,
            owner=self.rule or self.label)

    def psi_values(self, x, field_params: Sequence[float],
                   system_params: Sequence[float]) -> tuple[float, ...]:
        params = tuple(system_params) + tuple(field_params) + self.chain
        _, _, psis = self.compiled.evaluate(x, params)
        return psis


def hocbf_row(spec: HocbfSpec, x, field_params=(), system_params=(),
              slack_key: Optional[str] = None) -> LinearConstraintRow:
    return spec.row(x, field_params, system_params, slack_key)


# ---------------------------------------------------------------------------
# CLF compilation
# ---------------------------------------------------------------------------

@dataclass
class CompiledClf:
    name: str
    system: ControlAffineSystem
    param_syms: tuple[sp.Symbol, ...]
    _fn: Callable

    def evaluate(self, x, params: Sequence[float]):
        """(lg_coeffs, L_f V, V) at a state."""
        out = self._fn(tuple(float(v) for v in x), tuple(float(v) for v in params))
        q = self.system.q
        return np.array(out[:q], dtype=float), float(out[q]), float(out[q + 1])


_CLF_CACHE: dict = {}


def compile_clf(system: ControlAffineSystem, name: str, v_expr: sp.Expr,
                params: tuple[sp.Symbol, ...]) -> CompiledClf:
    key = (system.name, name, sp.srepr(v_expr))
    cached = _CLF_CACHE.get(key)
    if cached is not None:
        return cached
    lg = [sp.diff(v_expr, system.states[ci]) for ci in system.control_states]
    lf = system.lie_f(v_expr)
    param_syms = system.params + params
    fn = sp.lambdify((system.states, param_syms), (*lg, lf, v_expr),
                     modules="math", cse=True)
    compiled = CompiledClf(name, system, param_syms, fn)
    _CLF_CACHE[key] = compiled
    return compiled


@dataclass
class ClfSpec:
    compiled: CompiledClf
    epsilon: float  # convergence rate, > 0

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("CLF rate epsilon must be > 0")

    def row(self, x, field_params: Sequence[float], system_params: Sequence[float],
            slack_key: str = "delta_e") -> LinearConstraintRow:
        params = tuple(system_params) + tuple(field_params)
        lg, lf, val = self.compiled.evaluate(x, params)
        return LinearConstraintRow(
            u_coeffs=lg, constant=lf + self.epsilon * val, sense="le",
            slack=slack_key, slack_coeff=-1.0, owner="clf")

    def value(self, x, field_params: Sequence[float], system_params: Sequence[float]) -> float:
        params = tuple(system_params) + tuple(field_params)
        _, _, val = self.compiled.evaluate(x, params)
        return val


def clf_row(spec: ClfSpec, x, field_params=(), system_params=()) -> LinearConstraintRow:
    return spec.row(x, field_params, system_params)


# tracking CLF gain parameters, in calling order
TRACKING_CLF_PARAMS = sp.symbols("vd g_k1 g_c0 g_clat g_kd g_kmu g_kdelta", real=True)


def build_tracking_clf(epsilon: float) -> ClfSpec:
    """Relative-degree-one tracking surrogate for speed and lateral errors.

    The speed loop targets a = -g_k1 (v - vd); the lateral loop targets the
    steering-rate surrogate omega_hat = -g_kdelta * delta - g_kmu * (mu +
    g_kd * d), a nested chain that steers back toward the centerline.  Both
    squared errors see a control in their first derivative.
    """
    s, d, mu, v, a, delta, omega = VEHICLE.states
    vd, g_k1, g_c0, g_clat, g_kd, g_kmu, g_kdelta = TRACKING_CLF_PARAMS
    omega_hat = -(g_kdelta * delta + g_kmu * (mu + g_kd * d))
    v_expr = g_c0 * (a + g_k1 * (v - vd)) ** 2 + g_clat * (omega - omega_hat) ** 2
    compiled = compile_clf(VEHICLE, "tracking", v_expr, TRACKING_CLF_PARAMS)
    return ClfSpec(compiled, epsilon)


def tracking_clf_params(v_d: float, cfg) -> tuple[float, ...]:
    """Parameter tuple for the tracking CLF in declaration order."""
    return (v_d, cfg.k1, cfg.c0, cfg.c_lat, cfg.k_d, cfg.k_mu, cfg.k_delta)


# ---------------------------------------------------------------------------
# Vehicle barrier field factories
# ---------------------------------------------------------------------------

_BOUND = sp.Symbol("bound", real=True)
_E_OFF = sp.Symbol("e_off", real=True)  # disk longitudinal offset (frozen, m)
_LAT_OFF = sp.Symbol("lat_off", real=True)  # disk lateral midline offset (m)
_D_OFF = sp.Symbol("d_off", real=True)  # reference-point offset from corridor centerline (m)
_PX, _PY = sp.symbols("p_x p_y", real=True)  # frozen reference point
_PHI0 = sp.Symbol("phi0", real=True)  # frozen tangent angle
_S0 = sp.Symbol("s0", real=True)  # arclength at the reference point
_CIX, _CIY = sp.symbols("c_ix c_iy", real=True)  # instance disk center
_RSUM = sp.Symbol("r_sum", real=True)  # radius sum (frozen, m)

_S, _D, _MU, _V, _A, _DELTA, _OMEGA = VEHICLE.states

# b >= 0 forms for box state limits: (field, nominal relative degree)
_STATE_FIELDS = {
    "v_upper": (BarrierField("v_upper", _BOUND - _V, (_BOUND,)), 2),
    "v_lower": (BarrierField("v_lower", _V - _BOUND, (_BOUND,)), 2),
    "a_upper": (BarrierField("a_upper", _BOUND - _A, (_BOUND,)), 1),
    "a_lower": (BarrierField("a_lower", _A - _BOUND, (_BOUND,)), 1),
    "delta_upper": (BarrierField("delta_upper", _BOUND - _DELTA, (_BOUND,)), 2),
    "delta_lower": (BarrierField("delta_lower", _DELTA - _BOUND, (_BOUND,)), 2),
    "omega_upper": (BarrierField("omega_upper", _BOUND - _OMEGA, (_BOUND,)), 1),
    "omega_lower": (BarrierField("omega_lower", _OMEGA - _BOUND, (_BOUND,)), 1),
}

_KAP = VEHICLE.params[0]

# lateral acceleration a_lat = kappa v^2; degree is declared because the
# field is control-free whenever the frozen curvature is zero
_ALAT_FIELDS = {
    "alat_upper": (BarrierField("alat_upper", _BOUND - _KAP * _V**2, (_BOUND,)), 2),
    "alat_lower": (BarrierField("alat_lower", _KAP * _V**2 + _BOUND, (_BOUND,)), 2),
}

# signed lateral coordinate of a covering-disk center relative to a corridor
# centerline, with the path frame frozen at the tracked reference point
_DISK_LAT = _D + _E_OFF * sp.sin(_MU) + _D_OFF
_LANE_FIELDS = {
    "lane_upper": (BarrierField("lane_upper", _BOUND - _DISK_LAT, (_E_OFF, _D_OFF, _BOUND)), 3),
    "lane_lower": (BarrierField("lane_lower", _DISK_LAT + _BOUND, (_E_OFF, _D_OFF, _BOUND)), 3),
}

# squared center distance minus squared radius sum between an ego covering
# disk and a frozen instance disk (smooth form of the separation constraint)
_XE = _PX + sp.cos(_PHI0) * (_S - _S0) - sp.sin(_PHI0) * _D
_YE = _PY + sp.sin(_PHI0) * (_S - _S0) + sp.cos(_PHI0) * _D
_TH = _PHI0 + _MU
_CJX = _XE + _E_OFF * sp.cos(_TH) - _LAT_OFF * sp.sin(_TH)
_CJY = _YE + _E_OFF * sp.sin(_TH) + _LAT_OFF * sp.cos(_TH)
_DISK_FIELD = BarrierField(
    "disk_pair",
    (_CJX - _CIX) ** 2 + (_CJY - _CIY) ** 2 - _RSUM**2,
    (_PX, _PY, _PHI0, _S0, _E_OFF, _LAT_OFF, _CIX, _CIY, _RSUM),
)

VEHICLE_FIELDS: dict[str, tuple[BarrierField, int]] = {
    **_STATE_FIELDS,
    **_ALAT_FIELDS,
    **_LANE_FIELDS,
    "disk_pair": (_DISK_FIELD, 3),
}


def vehicle_field(name: str) -> tuple[BarrierField, int]:
    """(field, nominal relative degree) for a named vehicle barrier family."""
    return VEHICLE_FIELDS[name]
