"""Active-set Newton solver for the log-concave fit.

The objective ``f(c, h)`` is a sum of per-cell terms
``I_i(q_{i-1}, h_{i-1}, h_i)`` where the knots obey the recursion
``q_i = q_{i-1} + inc_i(h_{i-1}, h_i)``.  Every concave piecewise-affine
``h`` is ``h_0 (1 - u) + h_K u + sum_j t_j T_j(u)`` with tents
``T_j = min(u (1 - u_j), u_j (1 - u))`` and slope drops ``t_j >= 0``, so the
feasible set is a box in the cone coordinates ``(c, h_0, h_K, t)``.

Fits have few kinks, so the solver works like Lawson-Hanson on ``t``: it
keeps a small set of free kinks, minimises ``f`` over ``h`` affine between
them, frees the kink with the most negative gradient, and steps back when a
free kink turns negative.  Each restricted problem has a handful of
unknowns (``c`` and the values of ``h`` at the free nodes) and is solved by
Levenberg-Marquardt with the exact reduced Hessian, falling back to
Gauss-Newton where that Hessian is indefinite.  Node values move in log
coordinates: thin tails put ``h`` near zero, where ``f`` is far from
quadratic in ``h`` but close to it in ``log h``.

Large grids are warm-started from the fit on a nested coarser grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .phi import (
    phi,
    phi_moments,
    phi_moments_prime,
    phi_moments_second,
    phi_prime,
    phi_second,
)

COARSE_K = 256
_GL_S, _GL_W = np.polynomial.legendre.leggauss(6)
_GL_S = 0.5 * (_GL_S + 1.0)
_GL_W = 0.5 * _GL_W


@dataclass
class CellModel:
    """Objective, gradient and Hessian pieces at one point ``(c, h)``."""

    f: float
    grad: np.ndarray  # d f / d(c, h_0..h_K)
    q: np.ndarray
    # per-cell Hessian of I_i in (q_{i-1}, h_{i-1}, h_i); d2I/dq2 = 2 du
    Iqq: np.ndarray
    Iqa: np.ndarray
    Iqb: np.ndarray
    Iaa: np.ndarray
    Iab: np.ndarray
    Ibb: np.ndarray
    # increment gradient and Hessian in (h_{i-1}, h_i)
    inc_a: np.ndarray
    inc_b: np.ndarray
    inc_aa: np.ndarray
    inc_ab: np.ndarray
    inc_bb: np.ndarray
    # adjoint of each cell's increment
    inc_bar: np.ndarray


def _chain(Ga, Gd, Gaa, Gad, Gdd, a, b):
    """Derivatives in ``(a, b)`` of ``G(a, delta)`` with ``delta = b / a - 1``."""
    da, db = -b / a**2, 1.0 / a
    daa, dab = 2.0 * b / a**3, -1.0 / a**2
    ga = Ga + Gd * da
    gb = Gd * db
    Haa = Gaa + 2.0 * Gad * da + Gdd * da * da + Gd * daa
    Hab = Gad * db + Gdd * da * db + Gd * dab
    Hbb = Gdd * db * db
    return ga, gb, Haa, Hab, Hbb


def cell_model(c, h, du, y) -> CellModel:
    """Evaluate ``f``, its gradient and the per-cell second derivatives."""
    a, b = h[:-1], h[1:]
    delta = b / a - 1.0
    ph, dph, d2ph = phi(delta), phi_prime(delta), phi_second(delta)
    A, B = phi_moments(delta)
    dA, dB = phi_moments_prime(delta)
    d2A, d2B = phi_moments_second(delta)
    inc = du * ph / a
    q = np.empty(h.size)
    q[0] = c
    q[1:] = c + np.cumsum(inc)
    r = q[:-1] - y
    du2, du3 = du * du, du**3
    f = float(np.sum(r * r * du + 2.0 * r * du2 / a * A + du3 / a**2 * B))

    # I as a function of (q, a, delta), then chained to (q, a, b)
    Gq = 2.0 * r * du + 2.0 * du2 * A / a
    Ga = -2.0 * r * du2 * A / a**2 - 2.0 * du3 * B / a**3
    Gd = 2.0 * r * du2 * dA / a + du3 * dB / a**2
    Gqa = -2.0 * du2 * A / a**2
    Gqd = 2.0 * du2 * dA / a
    Gaa = 4.0 * r * du2 * A / a**3 + 6.0 * du3 * B / a**4
    Gad = -2.0 * r * du2 * dA / a**2 - 2.0 * du3 * dB / a**3
    Gdd = 2.0 * r * du2 * d2A / a + du3 * d2B / a**2
    Ia, Ib, Iaa, Iab, Ibb = _chain(Ga, Gd, Gaa, Gad, Gdd, a, b)
    Iqa = Gqa + Gqd * (-b / a**2)
    Iqb = Gqd / a

    Fa = -du * ph / a**2
    Fd = du * dph / a
    Faa = 2.0 * du * ph / a**3
    Fad = -du * dph / a**2
    Fdd = du * d2ph / a
    inc_a, inc_b, inc_aa, inc_ab, inc_bb = _chain(Fa, Fd, Faa, Fad, Fdd, a, b)

    q_bar = np.cumsum(Gq[::-1])[::-1]
    inc_bar = np.append(q_bar[1:], 0.0)
    grad = np.zeros(h.size + 1)
    grad[0] = q_bar[0]
    grad[1:-1] += Ia + inc_bar * inc_a
    grad[2:] += Ib + inc_bar * inc_b
    return CellModel(
        f, grad, q, 2.0 * du, Iqa, Iqb, Iaa, Iab, Ibb,
        inc_a, inc_b, inc_aa, inc_ab, inc_bb, inc_bar,
    )


# --- cone coordinates -------------------------------------------------------


def to_cone(h, u):
    """``(h_0, h_K, t_1 .. t_{K-1})`` with ``t_j`` the slope drop at ``u_j``."""
    s = np.diff(h) / np.diff(u)
    return np.concatenate([[h[0], h[-1]], s[:-1] - s[1:]])


def from_cone(theta, u):
    """Knot values of ``h`` from cone coordinates (inverse of :func:`to_cone`)."""
    h_first, h_last, t = theta[0], theta[1], theta[2:]
    # slope on cell i: (h_K - h_0) + sum_{j >= i} t_j - sum_j t_j u_j
    tail = np.append(np.cumsum(t[::-1])[::-1], 0.0)
    slopes = (h_last - h_first) - np.dot(t, u[1:-1]) + tail
    h = np.empty(u.size)
    h[0] = h_first
    h[1:] = h_first + np.cumsum(slopes * np.diff(u))
    h[-1] = h_last
    return h


def cone_pullback(gh, u):
    """Gradient w.r.t. cone coordinates from a gradient w.r.t. ``h``."""
    uj = u[1:-1]
    # sum_{i <= j} gh_i u_i  and  sum_{i > j} gh_i (1 - u_i)
    left = np.cumsum(gh * u)[1:-1]
    right = np.cumsum((gh * (1.0 - u))[::-1])[::-1][2:]
    return np.concatenate(
        [[np.dot(gh, 1.0 - u), np.dot(gh, u)], (1.0 - uj) * left + uj * right]
    )


def kink_noise(h, u):
    """Rounding level of slope drops recovered from ``h`` by differencing."""
    return 1e-13 * float(np.max(np.abs(h))) / float(np.min(np.diff(u)))


def projected_gradient(c, h, grad, u, eps, c_lower, free=None):
    """Box-projected gradient in cone coordinates ``(c, h_0, h_K, t)``.

    A kink counts as active when ``free`` marks it so, or, without a mask,
    when it sits within rounding of zero.  Returns ``(pg, z, g, lower, at)``.
    """
    z = np.concatenate([[c], to_cone(h, u)])
    g = np.concatenate([[grad[0]], cone_pullback(grad[1:], u)])
    lower = np.concatenate([[c_lower, eps, eps], np.zeros(u.size - 2)])
    scale = max(1.0, float(np.max(np.abs(h))))
    at = z - lower <= 1e-13 * scale
    at[3:] = z[3:] <= kink_noise(h, u) if free is None else ~np.asarray(free, dtype=bool)
    pg = g.copy()
    pg[at] = np.minimum(g[at], 0.0)
    return pg, z, g, lower, at


# --- restricted problems ----------------------------------------------------


@dataclass
class NewtonResult:
    c: float
    h: np.ndarray
    f: float
    iterations: int
    pg_norm: float
    converged: bool
    free: np.ndarray


def _basis(m, c_free, free_ends, kinks, u):
    """Null-space basis ``(Zq, Zh)`` of the recursion for the free coordinates.

    A free coordinate moves ``c`` or the value of ``h`` at one free node,
    with ``h`` kept affine between nodes; ``Zq`` holds the induced
    first-order change of ``q_0 .. q_{K-1}``.  Also returns the knot index
    of every node column.
    """
    K = u.size - 1
    nodes_idx = np.concatenate([[0], 1 + np.flatnonzero(kinks), [K]])
    hn_free = np.ones(nodes_idx.size, dtype=bool)
    hn_free[0], hn_free[-1] = free_ends
    cols = np.flatnonzero(hn_free)
    # hat functions on the nodes, evaluated at every knot
    nodes = u[nodes_idx]
    seg = np.clip(np.searchsorted(nodes, u, side="right") - 1, 0, nodes.size - 2)
    w = (u - nodes[seg]) / (nodes[seg + 1] - nodes[seg])
    hat = sp.csr_matrix(
        (np.concatenate([1.0 - w, w]), (np.tile(np.arange(u.size), 2), np.concatenate([seg, seg + 1]))),
        shape=(u.size, nodes.size),
    )
    Zh = hat[:, cols].toarray()
    dinc = m.inc_a[:, None] * Zh[:-1] + m.inc_b[:, None] * Zh[1:]
    Zq = np.zeros((K, Zh.shape[1]))
    Zq[1:] = np.cumsum(dinc[:-1], axis=0)
    if c_free:
        Zq = np.hstack([np.ones((K, 1)), Zq])
        Zh = np.hstack([np.zeros((K + 1, 1)), Zh])
    return Zq, Zh, nodes_idx[cols]


def _reduced_hessian(m, Zq, Zh):
    """``Z^T W Z`` for the Lagrangian Hessian ``W``, which is block diagonal per cell."""
    Za, Zb = Zh[:-1], Zh[1:]
    w = m.inc_bar

    def sym(X, d, Y):
        P = X.T @ (d[:, None] * Y)
        return P + P.T

    H = (
        Zq.T @ (m.Iqq[:, None] * Zq)
        + Za.T @ ((m.Iaa + w * m.inc_aa)[:, None] * Za)
        + Zb.T @ ((m.Ibb + w * m.inc_bb)[:, None] * Zb)
        + sym(Zq, m.Iqa, Za)
        + sym(Zq, m.Iqb, Zb)
        + sym(Za, m.Iab + w * m.inc_ab, Zb)
    )
    return 0.5 * (H + H.T)


def _gauss_newton(h, du, Zq, Zh):
    """``2 int dQ dQ^T`` for the free coordinates, by Gauss-Legendre per cell.

    Inside cell ``i``, ``Q = q_{i-1} + du / a * s Phi(delta s)`` with
    ``a = h_{i-1}``, ``delta = h_i / a - 1`` and ``s`` in [0, 1].
    """
    a, b = h[:-1, None], h[1:, None]
    delta = b / a - 1.0
    s = _GL_S[None, :]
    ds = delta * s
    ph, dph = phi(ds), phi_prime(ds)
    Fa = -du[:, None] / a**2 * s * ph
    Fd = du[:, None] / a * s * s * dph
    Qa = Fa + Fd * (-b / a**2)
    Qb = Fd / a
    w = np.sqrt(du[:, None] * _GL_W[None, :])
    V = (
        Zq[:, None, :]
        + Qa[:, :, None] * Zh[:-1, None, :]
        + Qb[:, :, None] * Zh[1:, None, :]
    ) * w[:, :, None]
    V = V.reshape(-1, Zq.shape[1])
    return 2.0 * (V.T @ V)


def _restricted_lm(c, h, m, kinks, u, y, eps, c_lower, tol, max_iter):
    """Levenberg-Marquardt on ``f`` with ``h`` affine between the free kinks.

    Iterates stay feasible: a step that would turn a free kink negative is
    cut back along the straight line in cone coordinates to where the first
    kink vanishes, and is kept only if it lowers ``f``.  ``c`` and the end
    values of ``h`` are held on their bounds while the gradient pushes
    outward.  Returns the new point, its model, the iteration count, whether
    the restricted gradient met ``tol``, and the mask of kinks that reached
    zero (the caller releases them).
    """
    du = np.diff(u)
    K = du.size
    lower_ends = np.array([c_lower, eps, eps])
    mu = 1e-8
    none_hit = np.zeros_like(kinks)
    for it in range(max_iter + 1):
        gz = np.concatenate([[m.grad[0]], cone_pullback(m.grad[1:], u)])
        ends = np.array([c, h[0], h[-1]])
        fixed = (ends - lower_ends <= 1e-13 * np.maximum(1.0, np.abs(ends))) & (gz[:3] > 0)
        g_free = np.concatenate([np.where(fixed, 0.0, gz[:3]), gz[3:][kinks]])
        if np.max(np.abs(g_free), initial=0.0) <= tol * (1.0 + abs(m.f)):
            return c, h, m, it, True, none_hit
        if it == max_iter:
            break
        Zq, Zh, node_idx = _basis(m, not fixed[0], ~fixed[1:], kinks, u)
        grad_fine = np.concatenate([[m.grad[0]], np.zeros(K - 1), m.grad[1:]])
        Z = np.vstack([Zq, Zh])
        # node values of h move in log coordinates, c linearly
        nc = Z.shape[1] - node_idx.size
        v = h[node_idx]
        D = np.concatenate([np.ones(nc), v])
        gr = D * (Z.T @ grad_fine)
        H = D[:, None] * _reduced_hessian(m, Zq, Zh) * D[None, :]
        H[nc:, nc:] += np.diag(gr[nc:])
        try:
            np.linalg.cholesky(H)
        except np.linalg.LinAlgError:
            H = D[:, None] * _gauss_newton(h, du, Zq, Zh) * D[None, :]
        dH = np.maximum(np.diag(H), 1e-300)
        log_floor = np.log(eps / v)
        end_pos = nc + np.flatnonzero((node_idx == 0) | (node_idx == K))
        th_cur = to_cone(h, u)
        th_cur[2:][~kinks] = 0.0
        hit = none_hit
        accepted = False
        while mu < 1e16:
            try:
                dz = np.linalg.solve(H + mu * np.diag(dH), -gr)
            except np.linalg.LinAlgError:
                mu *= 10.0
                continue
            # ends stay >= eps; cap log moves so exp cannot overflow
            dz[nc:] = np.minimum(dz[nc:], 5.0)
            dz[end_pos] = np.maximum(dz[end_pos], log_floor[end_pos - nc])
            step = Z @ np.concatenate([dz[:nc], v * np.expm1(dz[nc:])])
            c_new = max(c + step[0], c_lower)
            th = to_cone(h + step[K:], u)
            th[:2] = np.maximum(th[:2], eps)
            th[2:][~kinks] = 0.0
            pred = -(gr @ dz + 0.5 * dz @ H @ dz)
            if not (np.all(np.isfinite(th)) and pred > 0):
                mu *= 4.0
                continue
            neg = kinks & (th[2:] < 0.0)
            if neg.any():
                t0, t1 = np.maximum(th_cur[2:][neg], 0.0), th[2:][neg]
                alpha = float(np.min(t0 / (t0 - t1)))
                th = th_cur + alpha * (th - th_cur)
                c_new = c + alpha * (c_new - c)
                hit = kinks & (th[2:] <= kink_noise(from_cone(th, u), u))
                th[2:][hit] = 0.0
            h_new = from_cone(th, u)
            if np.all(h_new > 0):
                m_new = cell_model(c_new, h_new, du, y)
                if neg.any():
                    # a cut step has no model prediction; any decrease will do
                    if m_new.f < m.f:
                        accepted = True
                        break
                else:
                    rho = (m.f - m_new.f) / pred
                    if rho > 1e-4:
                        accepted = True
                        mu = max(mu * max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3), 1e-15)
                        break
            hit = none_hit
            mu *= 4.0
        if not accepted:
            return c, h, m, it, False, none_hit
        c, h, m = c_new, h_new, m_new
        if hit.any():
            return c, h, m, it + 1, False, hit
    return c, h, m, max_iter, False, none_hit


def _open_kink(c, h, m, j, g_j, u, y):
    """Armijo search along the slope drop at interior knot ``j`` (currently 0).

    ``g_j < 0`` is the derivative along that drop.  Newton steps on the
    enlarged free set can point the new kink negative (the objective is not
    convex), so it is opened on its own first; afterwards every free kink is
    strictly positive and cut-back steps always have positive length.
    """
    du = np.diff(u)
    th = to_cone(h, u)
    # a drop of 4 mean(h) moves h by about its own size at the middle knot
    tau = 4.0 * float(np.mean(h))
    for _ in range(60):
        trial = th.copy()
        trial[2 + j] = tau
        h_new = from_cone(trial, u)
        if np.all(h_new > 0):
            m_new = cell_model(c, h_new, du, y)
            if m_new.f <= m.f + 1e-4 * tau * g_j:
                return h_new, m_new, True
        tau *= 0.5
    return h, m, False


# --- drivers ----------------------------------------------------------------


def solve(c, h, u, y, eps, c_lower=-np.inf, tol=1e-7, max_iter=500, free=None) -> NewtonResult:
    """Minimise ``f`` over concave ``h >= eps`` (and ``c >= c_lower``).

    Starts from ``(c, h)`` projected onto the cone, with the kinks in
    ``free`` (default: the positive ones) free.  Stops when the projected
    gradient in cone coordinates is at most ``tol * (1 + f)``; ``max_iter``
    caps the Levenberg-Marquardt iterations over all rounds.
    """
    du = np.diff(u)
    th0 = to_cone(np.asarray(h, dtype=float), u)
    th0[:2] = np.maximum(th0[:2], eps)
    kinks = th0[2:] > 0 if free is None else np.asarray(free, dtype=bool) & (th0[2:] > 0)
    th0[2:] = np.where(kinks, th0[2:], 0.0)
    h = from_cone(th0, u)
    c = max(c, c_lower)
    m = cell_model(c, h, du, y)
    g0 = projected_gradient(c, h, m.grad, u, eps, c_lower, kinks)[2]
    outside = max(-float(np.min(np.where(kinks, np.inf, g0[3:]), initial=np.inf)), 0.0)
    total = 0
    converged = False
    while total < max_iter:
        # inexact inner solves while the outside violation is large
        inner_tol = max(0.1 * tol, 0.01 * outside / (1.0 + abs(m.f)))
        c, h, m, n_it, ok, hit = _restricted_lm(
            c, h, m, kinks, u, y, eps, c_lower, inner_tol, max_iter - total
        )
        total += max(n_it, 1)
        if hit.any():
            kinks &= ~hit
            continue
        pg, _, g, _, _ = projected_gradient(c, h, m.grad, u, eps, c_lower, kinks)
        if np.max(np.abs(pg)) <= tol * (1.0 + abs(m.f)):
            converged = True
            break
        cand = np.where(kinks, np.inf, g[3:])
        j = int(np.argmin(cand))
        outside = max(-float(cand[j]), 0.0)
        if cand[j] >= 0:
            # the violation sits on c or an end value: only a tighter inner
            # solve can fix it
            if not ok:
                break
            continue
        h, m, opened = _open_kink(c, h, m, j, float(cand[j]), u, y)
        if not opened:
            break
        kinks[j] = True
    pg = projected_gradient(c, h, m.grad, u, eps, c_lower, kinks)[0]
    pg_norm = float(np.max(np.abs(pg)))
    ok = converged or pg_norm <= tol * (1.0 + abs(m.f))
    return NewtonResult(c, h, m.f, total, pg_norm, ok, kinks)


def _coarsen(u, y, k):
    """Nested partition with about ``k`` cells and cell-averaged steps."""
    K = u.size - 1
    idx = np.unique(np.searchsorted(u, np.linspace(0.0, 1.0, k + 1)).clip(0, K))
    idx[0], idx[-1] = 0, K
    idx = np.unique(idx)
    mass = np.add.reduceat(np.diff(u) * y, idx[:-1])
    return idx, u[idx], mass / np.diff(u[idx])


def solve_multilevel(c, h, u, y, eps, c_lower=-np.inf, tol=1e-7, max_iter=500) -> NewtonResult:
    """:func:`solve`, warm-started from the fit on a nested coarser grid.

    Grids shrink by a factor of 8 down to about ``COARSE_K`` cells.  The
    coarse ``h`` interpolated linearly is concave on the fine grid with its
    kinks on shared knots, so it is a feasible start whose free kinks only
    need to settle locally.
    """
    K = u.size - 1
    if K <= 2 * COARSE_K:
        return solve(c, h, u, y, eps, c_lower, tol, max_iter)
    idx, uc, yc = _coarsen(u, y, max(COARSE_K, K // 8))
    coarse = solve_multilevel(c, h[idx], uc, yc, eps, c_lower, tol, max_iter)
    h0 = np.interp(u, uc, coarse.h)
    free = np.zeros(K - 1, dtype=bool)
    free[idx[1:-1][coarse.free] - 1] = True
    res = solve(coarse.c, h0, u, y, eps, c_lower, tol, max_iter, free)
    res.iterations += coarse.iterations
    return res
