"""Projection onto log-concave laws on the real line.

A law is log-concave exactly when ``h = 1 / Q'`` is positive and concave on
(0, 1).  On a partition the fit takes ``h`` affine between knots, so it is
described by the left endpoint ``c = Q(0)`` and the knot values
``h_0 .. h_K``; the knots of the quantile follow from

    q_i = q_{i-1} + du_i / h_{i-1} * Phi(delta_i),   delta_i = h_i / h_{i-1} - 1.

The squared 2-Wasserstein distance to a step quantile is available in closed
form through :func:`~wassproj.phi.phi_moments`, together with its exact
gradient.

Optimisation runs in cone coordinates.  Every concave piecewise-affine ``h``
on the partition is uniquely

    h(u) = h_0 (1 - u) + h_K u + sum_j t_j min(u (1 - u_j), u_j (1 - u)),

where ``t_j >= 0`` is the drop of slope at interior knot ``u_j``.  Since a
concave function sits above its chord, ``h >= eps`` reduces to
``h_0, h_K >= eps``, and the whole feasible set becomes a box.  The solver
itself lives in :mod:`wassproj.lcsolve`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import lcsolve
from .density import DensityModel
from .measures import EmpiricalMeasure, discretize
from .phi import phi, phi_moments, phi_moments_prime, phi_prime
from .qpsolver import SolverConfig, SolverReport, Status
from .quantiles import (
    LogConcaveQuantile,
    Partition,
    StepQuantile,
    log_concave_knots,
    point_mass,
)

logger = logging.getLogger(__name__)

EPS_SCALE = 1e-8
POINT_MASS_RTOL = 1e-12

__all__ = [
    "phi",
    "phi_moments",
    "q_knots",
    "logconcave_objective",
    "logconcave_gradient",
    "LogConcaveFit",
    "cone_to_h",
    "cone_grad",
    "h_to_cone",
    "fit_logconcave",
    "logconcave_density",
]


def _check(h, part, y=None):
    h = np.asarray(h, dtype=float)
    if h.shape != (part.K + 1,):
        raise ValueError("need one h value per knot")
    if np.any(~(h > 0)):
        raise ValueError("reciprocal slopes h must be positive")
    if y is not None:
        y = np.asarray(y, dtype=float)
        if y.shape != (part.K,):
            raise ValueError("need one step value per cell")
        return h, y
    return h


def q_knots(c: float, h, part: Partition) -> np.ndarray:
    """Quantile knots ``q_0 = c, ..., q_K`` of the law with reciprocal slopes ``h``."""
    h = _check(h, part)
    return log_concave_knots(c, h, part.du)


def _cell_terms(c, h, part, y):
    du = part.du
    h0 = h[:-1]
    delta = h[1:] / h0 - 1.0
    inc = du / h0 * phi(delta)
    q = np.empty(h.size)
    q[0] = c
    q[1:] = c + np.cumsum(inc)
    r = q[:-1] - y
    A, B = phi_moments(delta)
    return du, h0, delta, q, r, A, B


def logconcave_objective(c: float, h, part: Partition, y) -> float:
    """``int_0^1 (Q_{c,h} - Q_0)^2 du`` for the step quantile ``y`` on ``part``.

    Per cell, with ``r = q_{i-1} - y_i``::

        r^2 du + 2 r du^2 A(delta) / h_{i-1} + du^3 B(delta) / h_{i-1}^2.
    """
    h, y = _check(h, part, y)
    du, h0, _, _, r, A, B = _cell_terms(float(c), h, part, y)
    cells = r * r * du + 2.0 * r * du * du / h0 * A + du**3 / h0**2 * B
    return float(np.sum(cells))


def logconcave_gradient(c: float, h, part: Partition, y) -> np.ndarray:
    """Gradient of :func:`logconcave_objective` w.r.t. ``(c, h_0, ..., h_K)``.

    Reverse mode through the knot recursion: the adjoint of ``q_j`` collects
    the explicit dependence of every later cell, i.e. a reverse cumulative sum.
    """
    h, y = _check(h, part, y)
    du, h0, delta, _, r, A, B = _cell_terms(float(c), h, part, y)
    dA, dB = phi_moments_prime(delta)
    # explicit partials of cell i
    d_r = 2.0 * r * du + 2.0 * du * du / h0 * A
    d_delta = 2.0 * r * du * du / h0 * dA + du**3 / h0**2 * dB
    d_h0 = -2.0 * r * du * du / h0**2 * A - 2.0 * du**3 / h0**3 * B
    # adjoint of q_j (j = 0..K-1): every cell i > j uses q_{i-1} >= q_j
    q_bar = np.cumsum(d_r[::-1])[::-1]
    # increment of cell k feeds q_k..q_{K-1}; q_K is not used by any cell
    inc_bar = np.append(q_bar[1:], 0.0)
    d_delta = d_delta + inc_bar * du / h0 * phi_prime(delta)
    d_h0 = d_h0 - inc_bar * du / h0**2 * phi(delta)
    g = np.zeros(h.size + 1)
    g[0] = q_bar[0]
    # delta_i = h_i / h_{i-1} - 1
    g[1:-1] += d_h0 - d_delta * h[1:] / h0**2
    g[2:] += d_delta / h0
    return g


def logconcave_hessian_c() -> float:
    """The objective is exactly quadratic in ``c`` with second derivative 2."""
    return 2.0


# --- cone coordinates -------------------------------------------------------


def cone_to_h(theta, u):
    """``h`` at the knots from ``theta = (h_0, h_K, t_1 .. t_{K-1})``."""
    return lcsolve.from_cone(np.asarray(theta, dtype=float), np.asarray(u, dtype=float))


def cone_grad(gh, u):
    """Pull a gradient w.r.t. ``h`` back to cone coordinates."""
    return lcsolve.cone_pullback(np.asarray(gh, dtype=float), np.asarray(u, dtype=float))


def h_to_cone(h, u):
    """Inverse of :func:`cone_to_h` (``t`` are the slope drops at interior knots)."""
    return lcsolve.to_cone(np.asarray(h, dtype=float), np.asarray(u, dtype=float))


# --- fit --------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LogConcaveFit:
    """Result of :func:`fit_logconcave`.

    A point-mass fit has ``h`` set to ``None`` and ``q`` equal to ``[c]``.
    """

    partition: Partition
    c: float
    h: np.ndarray | None
    q: np.ndarray
    report: SolverReport
    w2: float
    data: StepQuantile
    eps: float = 0.0

    model = "logconcave"

    @property
    def is_point_mass(self) -> bool:
        return self.h is None

    def quantile(self):
        if self.is_point_mass:
            return point_mass(self.c)
        return LogConcaveQuantile(self.partition, self.c, self.h)

    @property
    def support(self) -> tuple[float, float]:
        return float(self.q[0]), float(self.q[-1])

    def density(self) -> DensityModel:
        return logconcave_density(self)


def _best_c(c, h, part, y):
    """Closed-form optimal ``c`` for fixed ``h`` (the objective is quadratic in c)."""
    return c - logconcave_gradient(c, h, part, y)[0] / logconcave_hessian_c()


def _reflect(part: Partition, y):
    """The problem for ``-X``: reversed cells and negated, reversed steps."""
    return Partition(1.0 - part.u[::-1]), -y[::-1]


def fit_logconcave(
    data,
    K: int | None = None,
    cfg: SolverConfig | None = None,
    nonneg_support: bool = False,
) -> LogConcaveFit:
    """Wasserstein projection of ``data`` onto log-concave laws.

    Parameters
    ----------
    data : EmpiricalMeasure or StepQuantile
    K : int, optional
        Uniform grid size for a measure (default ``max(64, distinct atoms)``).
    cfg : SolverConfig, optional
        ``pg_tol`` is the stationarity target for the projected gradient in
        cone coordinates (relative to ``1 + objective``), ``pg_max_iter``
        caps the Newton iterations.
    nonneg_support : bool
        Also require ``c >= 0``, i.e. project onto log-concave laws on [0, inf).

    Notes
    -----
    The data are standardised to mean 0 and variance 1 before optimising and
    the fit is mapped back, which the model's invariance under affine maps
    makes exact.  Without ``nonneg_support`` the standardised problem is
    also reflected when its third moment is negative, so that ``X`` and
    ``-X`` are solved as the same problem.  A single-atom input is returned
    as that point mass.
    """
    cfg = cfg or SolverConfig()
    if isinstance(data, EmpiricalMeasure):
        from .monotone import default_grid_size

        if data.is_point_mass(POINT_MASS_RTOL):
            return _point_mass_fit(float(data.x[-1]), data.quantile())
        step = discretize(data, default_grid_size(data) if K is None else K)
    elif isinstance(data, StepQuantile):
        step = data
    else:
        raise TypeError(f"cannot fit {type(data).__name__}")
    lo, hi = float(step.y[0]), float(step.y[-1])
    if hi - lo <= POINT_MASS_RTOL * max(1.0, abs(hi), abs(lo)):
        return _point_mass_fit(step.mean(), step)
    if nonneg_support and lo < 0:
        raise ValueError("nonneg_support needs non-negative data")

    part = step.partition
    mean = step.mean()
    sd = float(np.sqrt(np.dot(part.du, (step.y - mean) ** 2)))
    ys = (step.y - mean) / sd
    eps = EPS_SCALE / ((hi - lo) / sd)
    # c >= 0 in data units is c >= -mean / sd after standardising
    c_lower = -mean / sd if nonneg_support else -np.inf
    flip = not nonneg_support and float(np.dot(part.du, ys**3)) < 0.0
    solve_part, solve_y = _reflect(part, ys) if flip else (part, ys)

    # start from the uniform law with the same mean and variance
    c0 = max(-np.sqrt(3.0), c_lower)
    h0 = np.full(part.K + 1, 1.0 / np.sqrt(12.0))
    res = lcsolve.solve_multilevel(
        c0, h0, solve_part.u, solve_y, eps, c_lower, cfg.pg_tol, cfg.pg_max_iter
    )
    c, h = res.c, res.h
    c = max(_best_c(c, h, solve_part, solve_y), c_lower)
    report = _stationarity_report(c, h, solve_part, solve_y, eps, res, cfg, c_lower)
    if flip:
        c = -log_concave_knots(c, h, solve_part.du)[-1]
        h = h[::-1]

    c_fit = mean + sd * c
    h_fit = h / sd
    q = log_concave_knots(c_fit, h_fit, part.du)
    obj = logconcave_objective(c_fit, h_fit, part, step.y)
    return LogConcaveFit(
        part, c_fit, h_fit, q, report, float(np.sqrt(max(obj, 0.0))), step, eps / sd
    )


def _stationarity_report(c, h, part, y, eps, res, cfg, c_lower):
    """Projected-gradient norm in cone coordinates, relative to ``1 + f``."""
    u = part.u
    f = logconcave_objective(c, h, part, y)
    g = logconcave_gradient(c, h, part, y)
    pg, z, _, _, _ = lcsolve.projected_gradient(c, h, g, u, eps, c_lower, res.free)
    dual = float(np.max(np.abs(pg))) / (1.0 + abs(f))
    theta = z[1:]
    noise = lcsolve.kink_noise(h, u)
    prim = float(max(0.0, -np.min(theta[2:], initial=0.0) - noise, eps - min(theta[0], theta[1])))
    status = Status.OPTIMAL if dual <= cfg.pg_tol else Status.MAX_ITER
    return SolverReport(res.iterations, prim, dual, f, status)


def _point_mass_fit(x: float, step: StepQuantile) -> LogConcaveFit:
    rep = SolverReport(0, 0.0, 0.0, 0.0, Status.OPTIMAL)
    w2 = float(np.sqrt(np.dot(step.partition.du, (step.y - x) ** 2)))
    return LogConcaveFit(step.partition, x, None, np.array([x]), rep, w2, step)


def logconcave_density(fit: LogConcaveFit) -> DensityModel:
    """Piecewise log-affine density on ``[q_0, q_K]``.

    On ``(q_{i-1}, q_i)``: ``f(x) = h_{i-1} exp(beta_i (x - q_{i-1}))`` with
    ``beta_i = (h_i - h_{i-1}) / du_i``; ``f`` is continuous with ``f(q_i) = h_i``.
    """
    if fit.is_point_mass:
        raise ValueError("a point-mass fit has no density")
    h = fit.h
    beta = np.diff(h) / fit.partition.du
    q = fit.q
    keep = np.diff(q) > 0
    edges = np.append(q[:-1][keep], q[-1])
    return DensityModel(edges, np.log(h[:-1][keep]), beta[keep], "piecewise-log-affine")
