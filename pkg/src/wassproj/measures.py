"""Empirical measures and their quantile functions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .quantiles import (
    KNOT_MERGE_TOL,
    Partition,
    Quantile,
    StepQuantile,
    _frozen,
)


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Discrete law ``sum_i w_i delta_{x_i}`` with sorted, distinct atoms."""

    x: np.ndarray
    w: np.ndarray
    raw_weights: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "x", _frozen(self.x))
        object.__setattr__(self, "w", _frozen(self.w))
        raw = self.w if self.raw_weights is None else self.raw_weights
        object.__setattr__(self, "raw_weights", _frozen(raw))

    def __len__(self):
        return self.x.size

    @property
    def cumulative(self) -> np.ndarray:
        """CDF values at the atoms; the last entry is exactly 1.

        Accumulated on the unnormalised weights, so integer weights (counts)
        give correctly rounded fractions ``i / n`` that coincide with a
        uniform grid wherever they should.
        """
        cw = np.cumsum(self.raw_weights)
        cw = cw / cw[-1]
        cw[-1] = 1.0
        return cw

    def mean(self) -> float:
        return float(np.dot(self.w, self.x))

    def quantile(self) -> StepQuantile:
        """Exact step representation of the quantile function."""
        part = Partition.from_points(self.cumulative[:-1])
        mid = 0.5 * (part.u[:-1] + part.u[1:])
        return StepQuantile(part, quantile_of(self, mid))

    def is_point_mass(self, rtol: float = 1e-12) -> bool:
        lo, hi = self.x[0], self.x[-1]
        return hi - lo <= rtol * max(1.0, abs(hi))


def build_empirical(values, weights=None) -> EmpiricalMeasure:
    """Sort, merge duplicates and normalise into an :class:`EmpiricalMeasure`.

    Parameters
    ----------
    values : array-like of float
        Atom locations; must be finite and non-empty.
    weights : array-like of float, optional
        Positive weights (default uniform).  They are normalised to sum 1.
    """
    x = np.asarray(values, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("no data values")
    if not np.all(np.isfinite(x)):
        raise ValueError("data values must be finite")
    if weights is None:
        w = np.ones_like(x)
    else:
        w = np.asarray(weights, dtype=float).ravel()
        if w.shape != x.shape:
            raise ValueError("weights and values differ in length")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("weights must be finite and positive")
    order = np.argsort(x, kind="stable")
    x, w = x[order], w[order]
    ux, inv = np.unique(x, return_inverse=True)
    uw = np.bincount(inv, weights=w)
    return EmpiricalMeasure(ux, uw / uw.sum(), uw)


def quantile_of(m: EmpiricalMeasure, u):
    """Left-continuous quantile ``inf{x : F(x) >= u}`` for ``u`` in (0, 1)."""
    u_arr = np.asarray(u, dtype=float)
    if np.any(~((u_arr > 0) & (u_arr < 1))):
        raise ValueError("u must lie in the open interval (0, 1)")
    cw = m.cumulative
    idx = np.searchsorted(cw, u_arr, side="left")
    # guard cumulative sums that fall a rounding error short of u
    idx = np.minimum(idx, m.x.size - 1)
    out = m.x[idx]
    return float(out) if np.ndim(u) == 0 else out


def discretize(m: EmpiricalMeasure, K: int, extra=None) -> StepQuantile:
    """Step quantile of ``m`` on the union of its CDF jumps and a uniform ``K``-grid.

    ``extra`` optionally adds further breakpoints (e.g. the jumps of a second
    measure, to put two data sets on a common partition).
    """
    if int(K) != K or K < 1:
        raise ValueError("K must be a positive integer")
    points = [np.arange(1, K) / K, m.cumulative[:-1]]
    if extra is not None:
        points.append(np.asarray(extra, dtype=float).ravel())
    part = Partition.from_points(np.concatenate(points), tol=KNOT_MERGE_TOL)
    mid = 0.5 * (part.u[:-1] + part.u[1:])
    return StepQuantile(part, quantile_of(m, mid))


def common_discretization(measures, K: int) -> list[StepQuantile]:
    """Discretise several measures on one shared partition."""
    jumps = np.concatenate([m.cumulative[:-1] for m in measures])
    return [discretize(m, K, extra=jumps) for m in measures]


def sample(q, n: int, seed: int) -> np.ndarray:
    """Draw ``n`` values ``q(U)`` with ``U`` uniform from ``numpy``'s PCG64 stream.

    ``q`` is any callable quantile (a :class:`Quantile` or an
    :class:`EmpiricalMeasure`).  The output depends only on ``(q, n, seed)``.
    """
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    rng = np.random.default_rng(seed)
    u = rng.random(int(n))
    # random() is in [0, 1); map an exact 0 onto the open interval
    u = np.where(u == 0.0, np.nextafter(0.0, 1.0), u)
    if isinstance(q, EmpiricalMeasure):
        return quantile_of(q, u)
    return np.asarray(q(u), dtype=float)


def pushforward_affine(q, a: float, b: float):
    """Quantile of ``T#mu`` for ``T(x) = a + b x``.

    For ``b > 0`` this is ``a + b Q(u)``; for ``b < 0`` the parameter axis is
    reflected, ``a + b Q(1 - u)``.  Accepts a :class:`Quantile` or an
    :class:`EmpiricalMeasure` (which yields an :class:`EmpiricalMeasure`).
    """
    if b == 0 or not np.isfinite(b):
        raise ValueError("b must be finite and nonzero")
    if isinstance(q, EmpiricalMeasure):
        return build_empirical(a + b * q.x, q.raw_weights)
    if not isinstance(q, Quantile):
        raise TypeError(f"cannot push forward {type(q).__name__}")
    return q.affine(a, b)
