"""Grenander's estimator, built on the quantile side.

The quantile function of the Grenander estimator is the greatest convex
minorant (GCM) of the empirical quantile pinned to 0 at ``u = 0``.  Its
reciprocal slopes give a piecewise-constant, non-increasing density on
``[0, max x]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .density import DensityModel
from .measures import EmpiricalMeasure
from .qpsolver import SolverReport, Status
from .quantiles import LinearQuantile, Partition, StepQuantile
from .transport import w2_distance


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def gcm(points) -> list[tuple[float, float]]:
    """Knots of the greatest convex minorant of a point set.

    Parameters
    ----------
    points : sequence of (u, v)
        Abscissae must be strictly increasing.

    Returns
    -------
    list of (u, v)
        Vertices of the lower convex hull, first and last point included.
        Collinear interior points are dropped.

    Raises
    ------
    ValueError
        If the abscissae are not strictly increasing or the input is empty.
    """
    pts = [(float(u), float(v)) for u, v in points]
    if not pts:
        raise ValueError("need at least one point")
    us = np.array([p[0] for p in pts])
    if np.any(np.diff(us) <= 0):
        raise ValueError("points must have strictly increasing u")
    hull: list[tuple[float, float]] = []
    for p in pts:
        # pop while the last turn is not strictly counter-clockwise
        while len(hull) >= 2 and _cross(hull[-2], hull[-1], p) <= 0:
            hull.pop()
        hull.append(p)
    return hull


def _staircase_points(m: EmpiricalMeasure):
    """The pin ``(0, 0)`` and the right end ``(F_i, x_i)`` of every step.

    A convex function below these points is below the whole non-decreasing
    staircase, since on each step the chord between neighbouring right ends
    lies under the step value.
    """
    return [(0.0, 0.0)] + list(zip(m.cumulative.tolist(), m.x.tolist()))


@dataclass(frozen=True, eq=False)
class GrenanderFit:
    """Grenander estimate in the same shape as the projection fits.

    Attributes
    ----------
    partition : Partition
        The GCM knots in ``u``.
    q : ndarray
        GCM values at the knots, ``q[0] = 0`` and ``q[-1] = max x``.
    w2 : float
        2-Wasserstein distance to the empirical measure.
    data : StepQuantile
    report : SolverReport
        Always Optimal; the construction is exact.
    """

    partition: Partition
    q: np.ndarray
    w2: float
    data: StepQuantile
    report: SolverReport

    model = "grenander"

    def quantile(self) -> LinearQuantile:
        return LinearQuantile(self.partition, self.q)

    @property
    def support(self) -> tuple[float, float]:
        return 0.0, float(self.q[-1])

    def density(self) -> DensityModel:
        du = self.partition.du
        return DensityModel.piecewise_constant(self.q, du / np.diff(self.q))


def fit_grenander(m: EmpiricalMeasure) -> GrenanderFit:
    """Grenander estimate of ``m`` with its quantile knots and W2 to the data.

    Raises
    ------
    ValueError
        If some data value is not strictly positive.
    """
    if not isinstance(m, EmpiricalMeasure):
        raise TypeError(f"need an EmpiricalMeasure, got {type(m).__name__}")
    if m.x[0] <= 0:
        raise ValueError(f"Grenander needs strictly positive data; smallest value is {m.x[0]!r}")
    knots = gcm(_staircase_points(m))
    u = np.array([k[0] for k in knots])
    q = np.array([k[1] for k in knots])
    u[-1] = 1.0
    part = Partition(u)
    data = m.quantile()
    w2 = w2_distance(LinearQuantile(part, q), data)
    rep = SolverReport(0, 0.0, 0.0, w2 * w2, Status.OPTIMAL)
    return GrenanderFit(part, q, w2, data, rep)


def grenander(m: EmpiricalMeasure) -> DensityModel:
    """Piecewise-constant non-increasing density on ``(0, max x]``.

    Examples
    --------
    >>> from wassproj.measures import build_empirical
    >>> d = grenander(build_empirical([1.0, 2.0]))
    >>> d.edges.tolist(), d.heights.tolist()
    ([0.0, 2.0], [0.5])
    """
    return fit_grenander(m).density()


__all__ = ["gcm", "grenander", "fit_grenander", "GrenanderFit"]
