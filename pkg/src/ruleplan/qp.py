"""Dense convex QP solver (dual active-set, Goldfarb-Idnani).

Solves  min 1/2 x^T H x + f^T x  s.t.  A x <= b,  lb <= x <= ub.

The per-step problems are tiny (<= ~12 variables, <= ~100 rows), so the
implementation re-solves the active-set KKT system with dense numpy at
every iteration instead of maintaining factor updates.  Starting from the
unconstrained minimizer and adding the most violated constraint keeps the
iterates dual-feasible; an unbounded dual step is an infeasibility
certificate.  Tie-breaking is by lowest row index, so identical problems
yield bit-identical solutions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

RIDGE = 1e-10  # Tikhonov term added to zero diagonal entries of H

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"
STATUS_MAX_ITER = "max_iter"


@dataclass
class QpProblem:
    H: np.ndarray  # (n, n) symmetric PSD
    f: np.ndarray  # (n,)
    A: np.ndarray  # (m, n) inequality rows A x <= b
    b: np.ndarray  # (m,)
    lb: np.ndarray  # (n,) lower bounds, -inf allowed
    ub: np.ndarray  # (n,) upper bounds, +inf allowed

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=float)
        self.f = np.asarray(self.f, dtype=float)
        n = self.f.shape[0]
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        self.lb = np.asarray(self.lb, dtype=float).reshape(n)
        self.ub = np.asarray(self.ub, dtype=float).reshape(n)
        if self.H.shape != (n, n):
            raise ValueError("H dimension mismatch")
        if self.A.shape[0] != self.b.shape[0]:
            raise ValueError("A/b row mismatch")
        if not np.allclose(self.H, self.H.T, atol=1e-10):
            raise ValueError("H must be symmetric")
        if not np.all(np.isfinite(self.H)) or not np.all(np.isfinite(self.f)):
            raise ValueError("H and f must be finite")

    @property
    def n(self) -> int:
        return self.f.shape[0]


@dataclass
class QpSolution:
    status: str
    x: np.ndarray | None = None
    duals: np.ndarray | None = None  # multipliers for folded rows (A, then lb, then ub)
    objective: float = math.nan
    iterations: int = 0
    active: tuple[int, ...] = ()
    certificate: dict | None = None  # infeasibility evidence (row, dual direction)


def _folded_rows(p: QpProblem):
    """Fold A x <= b and box bounds into C x >= d (rows of C)."""
    rows = [-p.A]
    rhs = [-p.b]
    n = p.n
    eye = np.eye(n)
    lb_idx = [i for i in range(n) if np.isfinite(p.lb[i])]
    ub_idx = [i for i in range(n) if np.isfinite(p.ub[i])]
    if lb_idx:
        rows.append(eye[lb_idx])
        rhs.append(p.lb[lb_idx])
    if ub_idx:
        rows.append(-eye[ub_idx])
        rhs.append(-p.ub[ub_idx])
    C = np.vstack(rows) if rows else np.zeros((0, n))
    d = np.concatenate(rhs) if rhs else np.zeros(0)
    return C, d, lb_idx, ub_idx


def solve(p: QpProblem, tol: float = 1e-8, max_iter: int = 200) -> QpSolution:
    """Dual active-set solve; see module docstring for conventions."""
    n = p.n
    G = p.H.copy()
    diag = np.abs(np.diag(G))
    G[np.diag_indices(n)] += np.where(diag < RIDGE, RIDGE, 0.0)
    try:
        np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        raise ValueError("H must be positive semidefinite") from None
    Ginv = np.linalg.inv(G)

    C, d, lb_idx, ub_idx = _folded_rows(p)
    m = C.shape[0]

    x = -Ginv @ p.f
    active: list[int] = []
    lam: list[float] = []
    iters = 0

    while True:
        iters += 1
        if iters > max_iter:
            return QpSolution(status=STATUS_MAX_ITER, x=x, iterations=iters)
        slack = C @ x - d if m else np.zeros(0)
        viol = np.where(slack < -tol)[0]
        if viol.size == 0:
            duals = np.zeros(m)
            for idx, l in zip(active, lam):
                duals[idx] = l
            obj = 0.5 * x @ p.H @ x + p.f @ x
            return QpSolution(status=STATUS_OPTIMAL, x=x, duals=duals,
                              objective=float(obj), iterations=iters,
                              active=tuple(active))
        # most violated row, lowest index on ties
        pick = viol[int(np.argmin(slack[viol]))]
        n_p = C[pick]
        u_p = 0.0

        while True:
            iters += 1
            if iters > max_iter:
                return QpSolution(status=STATUS_MAX_ITER, x=x, iterations=iters)
            if active:
                N = C[active].T  # (n, q)
                GiN = Ginv @ N
                B = N.T @ GiN
                r = np.linalg.solve(B, N.T @ (Ginv @ n_p))
                z = Ginv @ n_p - GiN @ r
            else:
                r = np.zeros(0)
                z = Ginv @ n_p

            t1 = math.inf
            k_drop = -1
            for k, rk in enumerate(r):
                if rk > tol:
                    ratio = lam[k] / rk
                    if ratio < t1 - 1e-14:
                        t1, k_drop = ratio, k
            zn = float(n_p @ z)
            if zn > tol:
                t2 = -(float(n_p @ x) - d[pick]) / zn
            else:
                t2 = math.inf

            t = min(t1, t2)
            if not math.isfinite(t):
                cert = {"row": int(pick), "dual_direction": r.copy(),
                        "active": tuple(active)}
                return QpSolution(status=STATUS_INFEASIBLE, x=x,
                                  iterations=iters, certificate=cert)
            if math.isfinite(t2):
                x = x + t * z
            for k in range(len(lam)):
                lam[k] -= t * r[k]
            u_p += t
            if t == t2:
                active.append(int(pick))
                lam.append(u_p)
                break
            # dual step hit a blocking constraint: drop it and retry
            active.pop(k_drop)
            lam.pop(k_drop)


def kkt_check(p: QpProblem, x: np.ndarray, duals: np.ndarray, tol: float = 1e-8) -> bool:
    """Verify stationarity, primal feasibility, and complementary slackness.

    ``duals`` are multipliers for the folded constraint rows in the order
    produced by :func:`solve` (A rows, then finite lower bounds, then finite
    upper bounds).
    """
    C, d, _, _ = _folded_rows(p)
    x = np.asarray(x, dtype=float)
    duals = np.asarray(duals, dtype=float)
    if duals.shape[0] != C.shape[0]:
        raise ValueError("dual vector length mismatch")
    slack = C @ x - d
    if np.any(slack < -tol):
        return False
    if np.any(duals < -tol):
        return False
    grad = p.H @ x + p.f - C.T @ duals
    if np.linalg.norm(grad, ord=np.inf) > tol * max(1.0, np.linalg.norm(p.f, ord=np.inf)):
        return False
    comp = np.abs(duals * slack)
    return bool(np.all(comp <= tol * max(1.0, np.abs(slack).max(initial=1.0))))
