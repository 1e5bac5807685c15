"""Convex quadratic programming by operator splitting with active-set polishing.

Solves::

    minimize    1/2 x'Px + a'x
    subject to  Cx >= b

The iteration is the OSQP-style ADMM splitting ``z = Cx``, ``z >= b`` on a
Ruiz-equilibrated copy of the problem, with an adaptive penalty ``rho``.
Once the iterates settle, the constraints that look active are fixed as
equalities and the resulting KKT system is solved directly ("polish").  A
short primal-dual active-set loop repairs a slightly wrong guess, which is
what brings the residuals down to the 1e-9 range.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

logger = logging.getLogger(__name__)


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    MAX_ITER = "MaxIter"
    INFEASIBLE = "Infeasible"


@dataclass(frozen=True)
class SolverConfig:
    """Knobs shared by the QP solver and the log-concave optimiser.

    ``tol`` / ``max_iter`` govern the QP (KKT residual tolerance and ADMM
    iteration cap); ``pg_tol`` / ``pg_max_iter`` govern the log-concave
    optimiser (projected-gradient stationarity and iteration cap).
    """

    tol: float = 1e-9
    max_iter: int = 50_000
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    adaptive_rho: bool = True
    adaptive_rho_interval: int = 25
    polish: bool = True
    polish_max_iter: int = 50
    polish_start_tol: float = 1e-5
    scaling_iter: int = 10
    infeasibility_tol: float = 1e-7
    pg_tol: float = 1e-8
    pg_max_iter: int = 10_000


@dataclass(frozen=True)
class SolverReport:
    iterations: int
    primal_residual: float
    dual_residual: float
    objective: float
    status: Status
    polished: bool = False
    complementarity: float = 0.0
    multipliers: np.ndarray | None = field(default=None, repr=False, compare=False)

    def as_dict(self) -> dict:
        return {
            "iterations": int(self.iterations),
            "primal_residual": float(self.primal_residual),
            "dual_residual": float(self.dual_residual),
            "complementarity": float(self.complementarity),
            "objective": float(self.objective),
            "status": self.status.value,
            "polished": bool(self.polished),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SolverReport":
        return cls(
            iterations=int(d["iterations"]),
            primal_residual=float(d["primal_residual"]),
            dual_residual=float(d["dual_residual"]),
            objective=float(d["objective"]),
            status=Status(d["status"]),
            polished=bool(d.get("polished", False)),
            complementarity=float(d.get("complementarity", 0.0)),
        )


@dataclass(frozen=True, eq=False)
class QuadraticProgram:
    """``min 1/2 x'Px + a'x  s.t.  Cx >= b``; ``P`` symmetric PSD."""

    P: sp.csc_matrix
    a: np.ndarray
    C: sp.csr_matrix
    b: np.ndarray

    def __post_init__(self):
        P = sp.csc_matrix(self.P, dtype=float)
        a = np.asarray(self.a, dtype=float).ravel()
        n = a.size
        if self.C is None:
            C = sp.csr_matrix((0, n))
            b = np.zeros(0)
        else:
            C = sp.csr_matrix(self.C, dtype=float)
            b = np.asarray(self.b, dtype=float).ravel()
        if P.shape != (n, n):
            raise ValueError(f"P has shape {P.shape}, expected {(n, n)}")
        if C.shape[1] != n or C.shape[0] != b.size:
            raise ValueError("constraint matrix and bound vector do not match")
        asym = abs(P - P.T)
        scale = max(1.0, abs(P).max() if P.nnz else 0.0)
        if asym.nnz and asym.max() > 1e-12 * scale:
            raise ValueError("P must be symmetric")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.a.size

    @property
    def m(self) -> int:
        return self.b.size

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ (self.P @ x) + self.a @ x)


def kkt_residuals(qp: QuadraticProgram, x, lam):
    """Primal infeasibility, stationarity and complementarity (infinity norms).

    ``lam >= 0`` are the multipliers of ``Cx >= b``; a negative multiplier is
    counted as a stationarity defect.
    """
    slack = qp.C @ x - qp.b
    prim = float(np.max(np.maximum(-slack, 0.0), initial=0.0))
    grad = qp.P @ x + qp.a - qp.C.T @ lam
    dual = float(np.max(np.abs(grad), initial=0.0))
    dual = max(dual, float(np.max(np.maximum(-lam, 0.0), initial=0.0)))
    comp = float(np.max(np.abs(lam * slack), initial=0.0))
    return prim, dual, comp


def _bandwidth(M: sp.spmatrix) -> int:
    coo = M.tocoo()
    if coo.nnz == 0:
        return 0
    return int(np.max(np.abs(coo.row - coo.col)))


class _Factor:
    """Factorisation of the SPD ADMM matrix; banded Cholesky when narrow."""

    def __init__(self, M: sp.spmatrix):
        n = M.shape[0]
        bw = _bandwidth(M)
        self.banded = 0 < n and bw <= 8 and n > 4 * (bw + 1)
        if self.banded:
            ab = np.zeros((bw + 1, n))
            Mc = M.tocsc()
            for k in range(bw + 1):
                d = Mc.diagonal(k)
                ab[bw - k, k:] = d
            self.ab = sla.cholesky_banded(ab, lower=False)
        else:
            self.lu = spla.splu(sp.csc_matrix(M))

    def solve(self, rhs):
        if self.banded:
            return sla.cho_solve_banded((self.ab, False), rhs)
        return self.lu.solve(rhs)


def _ruiz(P, a, C, b, iters):
    """Ruiz equilibration of the KKT matrix plus cost scaling."""
    n, m = P.shape[0], C.shape[0]
    D = np.ones(n)
    E = np.ones(m)
    Ps, Cs = P.copy(), C.copy()
    for _ in range(iters):
        col_p = sp.linalg.norm(Ps, np.inf, axis=0) if Ps.nnz else np.zeros(n)
        col_c = sp.linalg.norm(Cs, np.inf, axis=0) if (m and Cs.nnz) else np.zeros(n)
        dn = np.maximum(np.asarray(col_p).ravel(), np.asarray(col_c).ravel())
        dn = np.where(dn < 1e-8, 1.0, dn)
        dn = 1.0 / np.sqrt(dn)
        if m:
            row_c = np.asarray(sp.linalg.norm(Cs, np.inf, axis=1)).ravel()
            em = np.where(row_c < 1e-8, 1.0, row_c)
            em = 1.0 / np.sqrt(em)
        else:
            em = np.ones(0)
        Dm = sp.diags(dn)
        Ps = Dm @ Ps @ Dm
        if m:
            Cs = sp.diags(em) @ Cs @ Dm
        D *= dn
        E *= em
    a_s = D * a
    mean_diag = np.mean(np.abs(Ps.diagonal())) if n else 1.0
    cost = 1.0 / max(mean_diag, np.max(np.abs(a_s), initial=0.0), 1e-8)
    cost = min(cost, 1e6)
    return (cost * Ps).tocsc(), cost * a_s, Cs.tocsr(), E * b, D, E, cost


def _solve_kkt(P, a, C, b, active, delta=1e-10, refine=5):
    """Solve the equality-constrained QP on ``active`` rows.

    Returns ``(x, lam_active)`` with ``P x + a = C_A' lam``, ``C_A x = b_A``.
    Uses a quasidefinite regularisation plus iterative refinement, so that
    redundant active rows do not break the factorisation.
    """
    n = P.shape[0]
    CA = C[active]
    k = CA.shape[0]
    K0 = sp.bmat([[P, CA.T], [CA, None]], format="csc") if k else sp.csc_matrix(P)
    reg = sp.diags(np.concatenate([np.full(n, delta), np.full(k, -delta)]))
    Kr = (K0 + reg).tocsc()
    lu = spla.splu(Kr)
    rhs = np.concatenate([-a, b[active]])
    sol = lu.solve(rhs)
    for _ in range(refine):
        r = rhs - K0 @ sol
        if np.max(np.abs(r), initial=0.0) < 1e-15 * max(1.0, np.max(np.abs(rhs), initial=0.0)):
            break
        sol = sol + lu.solve(r)
    x = sol[:n]
    lam = -sol[n:]
    return x, lam


def _polish(P, a, C, b, active, tol, max_iter):
    """Primal-dual active-set repair starting from an ADMM guess."""
    m = C.shape[0]
    active = np.asarray(active, dtype=bool).copy()
    x = lam_full = None
    for _ in range(max_iter):
        x, lam_a = _solve_kkt(P, a, C, b, np.flatnonzero(active))
        lam_full = np.zeros(m)
        lam_full[np.flatnonzero(active)] = lam_a
        slack = C @ x - b
        violated = (~active) & (slack < -tol)
        negative = active & (lam_full < -tol)
        if not violated.any() and not negative.any():
            return x, np.maximum(lam_full, 0.0), True
        active |= violated
        active &= ~negative
    return x, lam_full, False


def solve_qp(qp: QuadraticProgram, cfg: SolverConfig | None = None, x0=None, y0=None):
    """Solve a convex QP; returns ``(x, report)``.

    ``x0`` / ``y0`` warm-start the primal iterate and the (non-negative)
    multipliers.  The report carries the multipliers of ``Cx >= b``.
    """
    cfg = cfg or SolverConfig()
    n, m = qp.n, qp.m
    Ps, a_s, Cs, b_s, D, E, cost = _ruiz(qp.P, qp.a, qp.C, qp.b, cfg.scaling_iter)

    def unscale(xs, ys):
        # ys follows the OSQP sign convention (<= 0 on active lower bounds)
        return D * xs, -(E * ys) / cost

    def finish(x, lam, iters, status, polished):
        prim, dual, comp = kkt_residuals(qp, x, lam)
        obj = qp.objective(x)
        if status is Status.OPTIMAL and max(prim, dual, comp) > cfg.tol:
            status = Status.MAX_ITER
        return x, SolverReport(iters, prim, dual, obj, status, polished, comp, lam)

    if m == 0:
        x = _unconstrained(qp)
        return finish(x, np.zeros(0), 0, Status.OPTIMAL, False)

    xs = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float) / D
    ys = np.zeros(m) if y0 is None else -np.asarray(y0, dtype=float) * cost / E
    zs = Cs @ xs
    rho, sigma, alpha = cfg.rho, cfg.sigma, cfg.alpha
    I_n = sp.eye(n, format="csc")

    def factor(r):
        return _Factor((Ps + sigma * I_n + r * (Cs.T @ Cs)).tocsc())

    fac = factor(rho)
    eps_admm = cfg.polish_start_tol
    it = 0
    polished = False
    x = lam = None
    last_check_y = ys.copy()
    while it < cfg.max_iter:
        it += 1
        rhs = sigma * xs - a_s + Cs.T @ (rho * zs - ys)
        xt = fac.solve(rhs)
        zt = Cs @ xt
        xs = alpha * xt + (1 - alpha) * xs
        zr = alpha * zt + (1 - alpha) * zs
        z_new = np.maximum(zr + ys / rho, b_s)
        ys = ys + rho * (zr - z_new)
        zs = z_new

        if it % cfg.adaptive_rho_interval and it != cfg.max_iter:
            continue
        Cx = Cs @ xs
        Px = Ps @ xs
        CTy = Cs.T @ ys
        r_prim = np.max(np.abs(Cx - zs))
        r_dual = np.max(np.abs(Px + a_s + CTy))
        norm_p = max(np.max(np.abs(Cx)), np.max(np.abs(zs)), 1e-12)
        norm_d = max(np.max(np.abs(Px)), np.max(np.abs(CTy)), np.max(np.abs(a_s)), 1e-12)

        dy = ys - last_check_y
        last_check_y = ys.copy()
        if _certify_infeasible(Cs, b_s, dy, cfg.infeasibility_tol):
            x, lam = unscale(xs, ys)
            return finish(x, np.maximum(lam, 0.0), it, Status.INFEASIBLE, False)

        if r_prim <= eps_admm * (1 + norm_p) and r_dual <= eps_admm * (1 + norm_d):
            x, lam = unscale(xs, ys)
            if not cfg.polish:
                return finish(x, np.maximum(lam, 0.0), it, Status.OPTIMAL, False)
            slack = Cs @ xs - b_s
            guess = -ys > slack
            xp, lp, ok = _polish(Ps, a_s, Cs, b_s, guess, 1e-12, cfg.polish_max_iter)
            if ok:
                xcand, lcand = unscale(xp, -lp)
                prim, dual, comp = kkt_residuals(qp, xcand, lcand)
                if max(prim, dual, comp) <= cfg.tol:
                    x, lam, polished = xcand, lcand, True
                    return finish(x, lam, it, Status.OPTIMAL, polished)
            if eps_admm <= 1e-12:
                return finish(x, np.maximum(lam, 0.0), it, Status.OPTIMAL, False)
            eps_admm *= 0.1
            logger.debug("polish failed at iter %d; tightening ADMM to %g", it, eps_admm)

        if cfg.adaptive_rho:
            ratio = np.sqrt((r_prim / norm_p) / max(r_dual / norm_d, 1e-300))
            new_rho = float(np.clip(rho * ratio, 1e-6, 1e6))
            if new_rho > 5 * rho or new_rho < rho / 5:
                rho = new_rho
                fac = factor(rho)

    x, lam = unscale(xs, ys)
    return finish(x, np.maximum(lam, 0.0), it, Status.MAX_ITER, polished)


def _unconstrained(qp):
    if qp.n == 0:
        return np.zeros(0)
    try:
        return spla.splu(qp.P.tocsc()).solve(-qp.a)
    except RuntimeError:
        # singular P: least-squares stationary point (optimal only if consistent)
        return spla.lsqr(qp.P, -qp.a, atol=1e-15, btol=1e-15)[0]


def _certify_infeasible(C, b, dy, tol) -> bool:
    """Farkas test on the multiplier increment (OSQP sign convention)."""
    nrm = np.max(np.abs(dy), initial=0.0)
    if nrm < 1e-12:
        return False
    # upper bounds are infinite, so a positive component disqualifies dy
    if np.max(dy) > tol * nrm:
        return False
    lam = -dy
    return (np.max(np.abs(C.T @ lam)) <= tol * nrm) and (b @ lam > tol * nrm)
