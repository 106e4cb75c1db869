"""Shared numeric oracles for the test suite.

Lie derivatives are checked against time-derivative sampling along
integrated flows: for a control-affine system with constant input u and a
field b of relative degree m,

    d^m b / dt^m = L_f^m b + (L_g L_f^{m-1} b) u,

so polynomial fits of b along accurately integrated flows recover both the
drift derivatives and the control coefficients without touching any
symbolic machinery.
"""
import numpy as np

from ruleplan.config import VehicleGeometry
from ruleplan.dynamics import rk4_step

GEOM = VehicleGeometry()


def flow_samples(b_fn, x0, u, kappa, h, n_side=4, substeps=40):
    """b evaluated at times j*h, j in [-n_side, n_side], along the constant-u flow."""
    times = np.arange(-n_side, n_side + 1) * h
    out = np.empty(len(times))
    for idx, t in enumerate(times):
        x = np.asarray(x0, dtype=float).copy()
        if abs(t) > 0:
            dt = t / substeps
            for _ in range(substeps):
                x = rk4_step(x, u, kappa, abs(dt), GEOM) if dt > 0 else _rk4_back(x, u, kappa, -dt)
        out[idx] = b_fn(x)
    return times, out


def _rk4_back(x, u, kappa, dt):
    """Backward step: integrate the reversed vector field."""
    from ruleplan.dynamics import drift_f

    gu = np.zeros(7)
    gu[4], gu[6] = u

    def rate(xx):
        return -(drift_f(xx, kappa, GEOM) + gu)

    k1 = rate(x)
    k2 = rate(x + 0.5 * dt * k1)
    k3 = rate(x + 0.5 * dt * k2)
    k4 = rate(x + dt * k3)
    return x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def time_derivatives(b_fn, x0, u, kappa, order, h=0.02):
    """d^k b / dt^k for k = 0..order along the constant-u flow (poly fit)."""
    import math

    times, vals = flow_samples(b_fn, x0, u, kappa, h)
    deg = len(times) - 1
    coeffs = np.polynomial.polynomial.polyfit(times, vals, deg)
    return [coeffs[k] * math.factorial(k) for k in range(order + 1)]


def lie_row_oracle(b_fn, x0, kappa, m, u_scale=0.5, h=0.02):
    """(L_g L_f^{m-1} b, [L_f^k b for k=0..m]) via flow sampling.

    Valid when b has relative degree m: the m-th time derivative is affine
    in the constant input.
    """
    drift_derivs = time_derivatives(b_fn, x0, np.zeros(2), kappa, m, h=h)
    lg = np.zeros(2)
    for j in range(2):
        e = np.zeros(2)
        e[j] = u_scale
        d_plus = time_derivatives(b_fn, x0, e, kappa, m, h=h)[m]
        d_minus = time_derivatives(b_fn, x0, -e, kappa, m, h=h)[m]
        lg[j] = (d_plus - d_minus) / (2.0 * u_scale)
    return lg, drift_derivs


def chain_from_lie(drift_derivs, kappas):
    """psi values and the top-row constant from pure Lie derivatives.

    Expands psi_i = psi_{i-1}_dot + kc_i psi_{i-1} as a linear combination of
    L_f^k b; returns (psi_values, constant) with
    constant = L_f psi_{m-1} + kc_m psi_{m-1}.
    """
    m = len(kappas)
    coeffs = np.zeros(m + 1)
    coeffs[0] = 1.0  # psi_0 = b
    psis = [drift_derivs[0]]
    for i in range(1, m):
        nxt = np.zeros(m + 1)
        nxt[1:] += coeffs[:-1]  # differentiation shifts orders up
        nxt += kappas[i - 1] * coeffs
        coeffs = nxt
        psis.append(sum(coeffs[k] * drift_derivs[k] for k in range(m + 1)))
    shifted = np.zeros(m + 2)
    shifted[1:] = coeffs
    const = sum(shifted[k] * drift_derivs[k] for k in range(m + 1))
    const += kappas[m - 1] * psis[-1]
    return psis, const
