"""Projection onto laws on [0, inf) with a non-increasing density.

Such a law has a convex, non-decreasing quantile function vanishing at 0.
On a partition ``u_0 < ... < u_K`` the fit is the piecewise-affine quantile
through knots ``q_0 = 0 <= q_1 <= ... <= q_K`` with non-decreasing slopes,
and the squared 2-Wasserstein distance to a step quantile is a convex
quadratic in ``q``, so the fit is a QP.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .density import DensityModel
from .measures import EmpiricalMeasure, discretize
from .qpsolver import (
    QuadraticProgram,
    SolverConfig,
    SolverReport,
    Status,
    kkt_residuals,
    solve_qp,
)
from .quantiles import LinearQuantile, Partition, StepQuantile

logger = logging.getLogger(__name__)

DEFAULT_MIN_K = 64
FLAT_STEP_RTOL = 1e-12


def monotone_objective(q, part: Partition, y) -> float:
    """Squared W2 distance between the affine interpolant of ``q`` and step ``y``.

    Parameters
    ----------
    q : array of length K+1
        Knot values ``q_0 .. q_K``.
    part : Partition
    y : array of length K
        Step values, ``y[i]`` on cell ``i``.
    """
    q = np.asarray(q, dtype=float)
    y = np.asarray(y, dtype=float)
    if q.shape != (part.K + 1,) or y.shape != (part.K,):
        raise ValueError("need K+1 knots and K step values for the partition")
    q0, q1 = q[:-1], q[1:]
    cell = q0 * q0 + q1 * q1 + q0 * q1 - 3.0 * y * (q0 + q1) + 3.0 * y * y
    return float(np.dot(part.du / 3.0, cell))


def build_monotone_qp(part: Partition, y) -> tuple[QuadraticProgram, float]:
    """QP in ``q_1 .. q_K`` (``q_0 = 0`` eliminated) and its constant term.

    ``monotone_objective(concat(0, x), part, y) == qp.objective(x) + const``.
    Rows of ``C``: ``q_1 >= 0``, ``q_i - q_{i-1} >= 0`` (K rows), then the
    slope convexity ``w_i (s_{i+1} - s_i) >= 0`` with
    ``s_i = (q_i - q_{i-1}) / du_i`` (K-1 rows).  The positive row weight
    ``w_i = du_i du_{i+1} / (du_i + du_{i+1})`` keeps the entries in [-1, 1]
    even next to very thin cells.
    """
    y = np.asarray(y, dtype=float)
    K = part.K
    if y.shape != (K,):
        raise ValueError("need one step value per cell")
    du = part.du
    du_next = np.append(du[1:], 0.0)
    diag = 2.0 / 3.0 * (du + du_next)
    off = du[1:] / 3.0
    P = sp.diags([off, diag, off], [-1, 0, 1], shape=(K, K), format="csc")
    y_next = np.append(y[1:], 0.0)
    a = -(y * du + y_next * du_next)
    const = float(np.dot(du, y * y))

    mono = sp.eye(K, format="csr") - sp.eye(K, k=-1, format="csr")
    if K > 1:
        wsum = du[:-1] + du[1:]
        # w_i (s_{i+1} - s_i)  for i = 1..K-1, in terms of q_{i-1}, q_i, q_{i+1}
        rows = np.arange(K - 1)
        prev = rows - 1  # column of q_{i-1}; -1 means q_0 = 0
        vals_prev = du[1:] / wsum
        vals_mid = -np.ones(K - 1)
        vals_next = du[:-1] / wsum
        keep = prev >= 0
        r = np.concatenate([rows[keep], rows, rows])
        c = np.concatenate([prev[keep], rows, rows + 1])
        v = np.concatenate([vals_prev[keep], vals_mid, vals_next])
        conv = sp.csr_matrix((v, (r, c)), shape=(K - 1, K))
        C = sp.vstack([mono, conv], format="csr")
    else:
        C = mono
    b = np.zeros(C.shape[0])
    return QuadraticProgram(P, a, C, b), const


def ramp_gradient(gq, du):
    """Map a gradient w.r.t. ``q_1..q_K`` to ramp coordinates ``t_0..t_{K-1}``.

    With ``q(u) = sum_j t_j (u - u_j)_+`` one has
    ``g_j = sum_{i>j} (u_i - u_j) gq_i``, evaluated by two reverse cumsums.
    """
    s0 = np.cumsum(gq[::-1])[::-1]
    return np.cumsum((du * s0)[::-1])[::-1]


def _restricted_fit(qp: QuadraticProgram, u, free):
    """Minimise the QP over knots built from ramps at ``u[free]`` only.

    Returns the knot values ``q_1..q_K`` and the ramp coefficients on ``free``.
    The span of those ramps is the set of continuous piecewise-affine
    functions with breakpoints at ``u[free]``, vanishing on ``[0, u[free[0]]]``;
    they are parametrised by their values at the breakpoints after the first
    and at ``u = 1``, so the reduced Hessian is tridiagonal.
    """
    K = u.size - 1
    nodes = np.unique(np.concatenate([[0.0], u[free], [1.0]]))
    # free node values: every node after the first breakpoint
    first = u[free[0]]
    free_nodes = np.flatnonzero(nodes > first)
    # interpolation weights of fine knots u_1..u_K on the node grid
    ui = u[1:]
    seg = np.clip(np.searchsorted(nodes, ui, side="right") - 1, 0, nodes.size - 2)
    w_hi = (ui - nodes[seg]) / (nodes[seg + 1] - nodes[seg])
    w_lo = 1.0 - w_hi
    col_of = -np.ones(nodes.size, dtype=int)
    col_of[free_nodes] = np.arange(free_nodes.size)
    rows = np.concatenate([np.arange(K), np.arange(K)])
    cols = np.concatenate([col_of[seg], col_of[seg + 1]])
    vals = np.concatenate([w_lo, w_hi])
    keep = (cols >= 0) & (vals != 0)
    B = sp.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(K, free_nodes.size))
    H = (B.T @ qp.P @ B).tocsc()
    rhs = -(B.T @ qp.a)
    if free_nodes.size == 1:
        c = rhs / H.diagonal()
    else:
        ab = np.vstack([np.concatenate([[0.0], H.diagonal(1)]), H.diagonal()])
        c = sla.solveh_banded(ab, rhs)
    x = B @ c
    node_vals = np.zeros(nodes.size)
    node_vals[free_nodes] = c
    slopes = np.diff(node_vals) / np.diff(nodes)
    kinks = np.diff(np.concatenate([[0.0], slopes]))  # slope jump at each node but 1
    t = kinks[np.searchsorted(nodes, u[free])]
    return x, t


def solve_monotone_active_set(qp: QuadraticProgram, part: Partition, cfg: SolverConfig):
    """Lawson-Hanson active set in ramp coordinates ``t >= 0``.

    ``qp`` must come from :func:`build_monotone_qp` on ``part``.  Each free
    ramp is a breakpoint of the fitted quantile, so the working set stays
    small and every restricted solve is tridiagonal.  Returns ``(x, report)``
    with ``x = (q_1 .. q_K)`` and a report whose multipliers refer to the
    rows of ``qp.C``.
    """
    u = part.u
    du = part.du
    K = part.K
    add_tol = 0.1 * cfg.tol
    # ramp gradient -> multiplier of the matching row of qp.C
    row_w = np.concatenate([[du[0]], du[:-1] * du[1:] / (du[:-1] + du[1:])])
    t = np.zeros(K)
    free = np.zeros(K, dtype=bool)
    x = np.zeros(K)
    it = 0
    status = Status.MAX_ITER
    while it < cfg.max_iter:
        g = ramp_gradient(qp.P @ x + qp.a, du)
        cand = np.where(free, np.inf, g / row_w)
        j = int(np.argmin(cand))
        if cand[j] >= -add_tol:
            status = Status.OPTIMAL
            break
        free[j] = True
        while True:
            it += 1
            idx = np.flatnonzero(free)
            z_x, z = _restricted_fit(qp, u, idx)
            if np.all(z > 0):
                x = z_x
                t[:] = 0.0
                t[idx] = z
                break
            # step back to the boundary and drop the ramps that hit zero
            neg = z <= 0
            ti = t[idx]
            alpha = np.min(ti[neg] / (ti[neg] - z[neg]))
            ti = ti + alpha * (z - ti)
            drop = idx[neg & (ti <= 1e-15 * max(1.0, np.max(np.abs(ti))))]
            if drop.size == 0:
                drop = idx[neg][np.argmin(ti[neg])][None]
            ti[np.isin(idx, drop)] = 0.0
            t[idx] = ti
            free[drop] = False
            if not free.any():
                x = np.zeros(K)
                break
            x = _knots_from_ramps(t, u)
            if it >= cfg.max_iter:
                break
    g = ramp_gradient(qp.P @ x + qp.a, du)
    # t_0 = q_1 / du_1 and t_j = s_{j+1} - s_j: the multiplier of each defining
    # row is the ramp gradient over the row weight; q_i >= q_{i-1} rows are slack
    lam_t = np.where(free, 0.0, g / row_w)
    lam = np.zeros(qp.m)
    lam[0] = lam_t[0]
    lam[K:] = lam_t[1:]
    prim, dual, comp = kkt_residuals(qp, x, lam)
    if status is Status.OPTIMAL and max(prim, dual, comp) > cfg.tol:
        status = Status.MAX_ITER
    report = SolverReport(it, prim, dual, qp.objective(x), status, False, comp, lam)
    return x, report


def _knots_from_ramps(t, u):
    """``q_i = sum_{j<i} t_j (u_i - u_j)`` for ``i = 1..K``."""
    slopes = np.cumsum(t)
    return np.cumsum(slopes * np.diff(u))


def _clean_knots(x, du):
    """Snap solver output onto the cone: slopes >= 0 and non-decreasing."""
    s = np.maximum.accumulate(np.maximum(np.diff(np.concatenate([[0.0], x])) / du, 0.0))
    return np.concatenate([[0.0], np.cumsum(s * du)])


@dataclass(frozen=True, eq=False)
class MonotoneFit:
    """Result of :func:`fit_monotone`.

    Attributes
    ----------
    partition : Partition
    q : ndarray
        Knots ``q_0 = 0 .. q_K`` of the convex piecewise-affine quantile.
    report : SolverReport
    w2 : float
        2-Wasserstein distance between the fit and the discretised data.
    data : StepQuantile
        The discretised data the fit was computed against.
    flat_steps : bool
        True when some cells have zero length in x (mass sitting on a point).
    """

    partition: Partition
    q: np.ndarray
    report: SolverReport
    w2: float
    data: StepQuantile
    flat_steps: bool = False

    model = "monotone"

    def quantile(self) -> LinearQuantile:
        return LinearQuantile(self.partition, self.q)

    @property
    def support(self) -> tuple[float, float]:
        return 0.0, float(self.q[-1])

    def density(self) -> DensityModel:
        return monotone_density(self)


def default_grid_size(m: EmpiricalMeasure) -> int:
    return max(DEFAULT_MIN_K, len(m))


MONOTONE_METHODS = ("active-set", "admm")


def fit_monotone(
    data, K: int | None = None, cfg: SolverConfig | None = None, method: str = "active-set"
) -> MonotoneFit:
    """Wasserstein projection of ``data`` onto non-increasing densities on [0, inf).

    Parameters
    ----------
    data : EmpiricalMeasure or StepQuantile
        Positive data.  A measure is discretised with :func:`discretize` on
        ``K`` uniform cells merged with its CDF jumps; a step quantile is used
        on its own partition.
    K : int, optional
        Uniform grid size (default ``max(64, number of distinct atoms)``).
    cfg : SolverConfig, optional
    method : {"active-set", "admm"}
        ``"active-set"`` runs :func:`solve_monotone_active_set`; ``"admm"``
        hands the same QP to the general solver :func:`solve_qp`.

    Notes
    -----
    The QP is solved for the data divided by their mean, and the knots are
    scaled back, so solver tolerances are relative to the data scale and
    rescaling the data rescales the knots exactly.
    """
    cfg = cfg or SolverConfig()
    if method not in MONOTONE_METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {MONOTONE_METHODS}")
    if isinstance(data, EmpiricalMeasure):
        if data.x[0] <= 0:
            raise ValueError(
                f"monotone model needs strictly positive data; smallest value is {float(data.x[0])!r}"
            )
        step = discretize(data, default_grid_size(data) if K is None else K)
    elif isinstance(data, StepQuantile):
        if data.y[0] <= 0:
            raise ValueError("monotone model needs strictly positive data")
        step = data
    else:
        raise TypeError(f"cannot fit {type(data).__name__}")

    part = step.partition
    scale = step.mean()
    qp, _ = build_monotone_qp(part, step.y / scale)
    if method == "active-set":
        x, report = solve_monotone_active_set(qp, part, cfg)
    else:
        # warm start from the line through the data mean (feasible)
        x, report = solve_qp(qp, cfg, x0=2.0 * part.u[1:])
    q = scale * _clean_knots(x, part.du)
    obj = monotone_objective(q, part, step.y)
    # report the squared distance in data units, not the scaled QP value
    report = dataclasses.replace(report, objective=obj)
    flat = bool(np.any(np.diff(q) <= FLAT_STEP_RTOL * q[-1]))
    if flat:
        logger.warning("fit has zero-length steps; they are reported as atoms")
    return MonotoneFit(part, q, report, float(np.sqrt(max(obj, 0.0))), step, flat)


def monotone_density(fit: MonotoneFit) -> DensityModel:
    """Piecewise-constant density ``du_i / (q_i - q_{i-1})`` on ``(0, q_K]``.

    Cells of zero length in x are merged into atoms at their location.
    """
    q = np.asarray(fit.q, dtype=float)
    du = fit.partition.du
    dq = np.diff(q)
    if q[-1] <= 0:
        raise ValueError("degenerate fit: all knots equal")
    flat = dq <= FLAT_STEP_RTOL * q[-1]
    atoms = {}
    for i in np.flatnonzero(flat):
        loc = float(q[i])
        atoms[loc] = atoms.get(loc, 0.0) + float(du[i])
    keep = ~flat
    edges = np.append(q[:-1][keep], q[-1])
    # segments after a dropped cell start where the previous one ended
    heights = du[keep] / dq[keep]
    model = DensityModel.piecewise_constant(edges, heights, tuple(sorted(atoms.items())))
    return model.merged()
