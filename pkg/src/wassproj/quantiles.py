"""Quantile-function representations.

Every univariate law handled by the package is carried around as its
(left-continuous) quantile function on (0, 1).  Four concrete shapes occur:

* :class:`StepQuantile` -- piecewise constant (empirical measures),
* :class:`LinearQuantile` -- continuous piecewise affine (monotone fits,
  Grenander, uniforms),
* :class:`LogConcaveQuantile` -- reciprocal slope ``h = 1/Q'`` piecewise
  affine (log-concave fits),
* :class:`FunctionQuantile` -- any vectorised callable (reference laws).

All of them are immutable and can be shared freely between threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .integrate import adaptive_cells
from .phi import phi, phi_moments

KNOT_MERGE_TOL = 1e-14


def _frozen(arr):
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Partition:
    """Grid ``0 = u_0 < u_1 < ... < u_K = 1`` of the unit interval."""

    u: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        if u.ndim != 1 or u.size < 2:
            raise ValueError("a partition needs at least the two endpoints")
        if u[0] != 0.0 or u[-1] != 1.0:
            raise ValueError("partition must start at 0 and end at 1")
        if np.any(np.diff(u) <= 0):
            raise ValueError("partition must be strictly increasing")
        object.__setattr__(self, "u", _frozen(u))

    @property
    def K(self) -> int:
        return self.u.size - 1

    @property
    def du(self) -> np.ndarray:
        return np.diff(self.u)

    @classmethod
    def uniform(cls, K: int) -> "Partition":
        if K < 1:
            raise ValueError("K must be >= 1")
        u = np.arange(K + 1, dtype=float) / K
        return cls(u)

    @classmethod
    def from_points(cls, points, tol: float = KNOT_MERGE_TOL) -> "Partition":
        """Partition through ``points`` plus {0, 1}, dropping near-duplicates."""
        pts = np.asarray(points, dtype=float).ravel()
        pts = pts[(pts > tol) & (pts < 1.0 - tol)]
        pts = np.unique(pts)
        keep = [0.0]
        for p in pts:
            if p - keep[-1] > tol:
                keep.append(float(p))
        if 1.0 - keep[-1] <= tol and len(keep) > 1:
            keep.pop()
        keep.append(1.0)
        return cls(np.array(keep))

    def merge(self, other: "Partition") -> "Partition":
        return Partition.from_points(np.concatenate([self.u, other.u]))

    def cell_of(self, v) -> np.ndarray:
        """Index ``i`` (0-based) of the cell ``(u_i, u_{i+1}]`` containing ``v``."""
        idx = np.searchsorted(self.u, v, side="left") - 1
        return np.clip(idx, 0, self.K - 1)

    def __eq__(self, other):
        return isinstance(other, Partition) and np.array_equal(self.u, other.u)

    def __hash__(self):
        return hash(self.u.tobytes())


class Quantile:
    """Base class: a non-decreasing function on (0, 1)."""

    partition: Partition

    def __call__(self, v):
        raise NotImplementedError

    def mean(self) -> float:
        raise NotImplementedError

    def refine(self, part: Partition) -> "Quantile":
        """Same function, re-expressed on the finer partition ``part``."""
        raise NotImplementedError

    def affine(self, a: float, b: float) -> "Quantile":
        """Quantile of the pushforward under ``x -> a + b x`` (``b != 0``)."""
        raise NotImplementedError

    @property
    def support(self) -> tuple[float, float]:
        return float(self(0.0)), float(self(1.0))


def _check_affine(b):
    if not np.isfinite(b) or b == 0:
        raise ValueError("affine map needs a finite nonzero slope b")


@dataclass(frozen=True, eq=False)
class StepQuantile(Quantile):
    """Piecewise-constant quantile, equal to ``y[i]`` on ``(u_i, u_{i+1}]``."""

    partition: Partition
    y: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        if y.shape != (self.partition.K,):
            raise ValueError("need one value per cell")
        if np.any(np.diff(y) < 0):
            raise ValueError("step values must be non-decreasing")
        object.__setattr__(self, "y", _frozen(y))

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        return self.y[self.partition.cell_of(v)]

    def mean(self) -> float:
        return float(np.dot(self.partition.du, self.y))

    def refine(self, part):
        mid = 0.5 * (part.u[:-1] + part.u[1:])
        return StepQuantile(part, self(mid))

    def affine(self, a, b):
        _check_affine(b)
        if b > 0:
            return StepQuantile(self.partition, a + b * self.y)
        u = 1.0 - self.partition.u[::-1]
        u[0], u[-1] = 0.0, 1.0
        return StepQuantile(Partition(u), a + b * self.y[::-1])

    @property
    def support(self):
        return float(self.y[0]), float(self.y[-1])

    def cell_edges(self):
        """Values at the left/right end of every cell (constant per cell)."""
        return self.y, self.y


@dataclass(frozen=True, eq=False)
class LinearQuantile(Quantile):
    """Continuous quantile, affine between knots ``(u_i, q_i)``."""

    partition: Partition
    q: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        if q.shape != (self.partition.K + 1,):
            raise ValueError("need one value per knot")
        if np.any(np.diff(q) < 0):
            raise ValueError("knot values must be non-decreasing")
        object.__setattr__(self, "q", _frozen(q))

    def __call__(self, v):
        return np.interp(np.asarray(v, dtype=float), self.partition.u, self.q)

    def mean(self) -> float:
        return float(np.dot(self.partition.du, 0.5 * (self.q[:-1] + self.q[1:])))

    def refine(self, part):
        return LinearQuantile(part, self(part.u))

    def affine(self, a, b):
        _check_affine(b)
        if b > 0:
            return LinearQuantile(self.partition, a + b * self.q)
        u = 1.0 - self.partition.u[::-1]
        u[0], u[-1] = 0.0, 1.0
        return LinearQuantile(Partition(u), a + b * self.q[::-1])

    @property
    def support(self):
        return float(self.q[0]), float(self.q[-1])

    def cell_edges(self):
        return self.q[:-1], self.q[1:]


def log_concave_knots(c, h, du):
    """Knot values ``q_0 = c``, ``q_i = q_{i-1} + du_i / h_{i-1} * Phi(delta_i)``."""
    h = np.asarray(h, dtype=float)
    if np.any(~(h > 0)):
        raise ValueError("reciprocal slopes h must be positive")
    delta = h[1:] / h[:-1] - 1.0
    inc = du / h[:-1] * phi(delta)
    q = np.empty(h.size)
    q[0] = c
    q[1:] = c + np.cumsum(inc)
    return q


@dataclass(frozen=True, eq=False)
class LogConcaveQuantile(Quantile):
    """Quantile ``Q(u) = c + int_0^u ds / h(s)`` with ``h`` affine on each cell.

    ``h`` holds the values at the knots of ``partition``; it must be
    positive.  Within cell ``i``, with ``t = (u - u_{i-1}) / du_i``,
    ``Q(u) = q_{i-1} + du_i t / h_{i-1} * Phi(delta_i t)``.
    """

    partition: Partition
    c: float
    h: np.ndarray
    q: np.ndarray = field(init=False)

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float)
        if h.shape != (self.partition.K + 1,):
            raise ValueError("need one h value per knot")
        object.__setattr__(self, "c", float(self.c))
        object.__setattr__(self, "h", _frozen(h))
        object.__setattr__(
            self, "q", _frozen(log_concave_knots(self.c, h, self.partition.du))
        )

    @property
    def delta(self) -> np.ndarray:
        return self.h[1:] / self.h[:-1] - 1.0

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        part = self.partition
        i = part.cell_of(v)
        du = part.du[i]
        t = np.clip((v - part.u[i]) / du, 0.0, 1.0)
        d = self.delta[i]
        return self.q[i] + du * t / self.h[i] * phi(d * t)

    def h_at(self, v):
        return np.interp(np.asarray(v, dtype=float), self.partition.u, self.h)

    def mean(self) -> float:
        du = self.partition.du
        A, _ = phi_moments(self.delta)
        return float(np.sum(self.q[:-1] * du + du * du / self.h[:-1] * A))

    def refine(self, part):
        return LogConcaveQuantile(part, self.c, self.h_at(part.u))

    def affine(self, a, b):
        _check_affine(b)
        scale = abs(b)
        if b > 0:
            return LogConcaveQuantile(self.partition, a + b * self.c, self.h / scale)
        u = 1.0 - self.partition.u[::-1]
        u[0], u[-1] = 0.0, 1.0
        return LogConcaveQuantile(Partition(u), a + b * self.q[-1], self.h[::-1] / scale)

    @property
    def support(self):
        return float(self.q[0]), float(self.q[-1])


@dataclass(frozen=True, eq=False)
class FunctionQuantile(Quantile):
    """Wrap a vectorised quantile function (e.g. a scipy ``ppf``)."""

    func: Callable[[np.ndarray], np.ndarray]
    name: str = "function"
    partition: Partition = field(default_factory=lambda: Partition.uniform(1))

    def __call__(self, v):
        return np.asarray(self.func(np.asarray(v, dtype=float)), dtype=float)

    def mean(self) -> float:
        val, _ = adaptive_cells(self, np.array([0.0]), np.array([1.0]))
        return val

    def refine(self, part):
        return FunctionQuantile(self.func, self.name, part)

    def affine(self, a, b):
        _check_affine(b)
        f = self.func
        if b > 0:
            g = lambda v: a + b * f(v)  # noqa: E731
        else:
            g = lambda v: a + b * f(1.0 - v)  # noqa: E731
        return FunctionQuantile(g, f"{a}+{b}*{self.name}", self.partition)


def point_mass(x: float) -> StepQuantile:
    return StepQuantile(Partition.uniform(1), [x])


def uniform(lo: float, hi: float) -> LinearQuantile:
    return LinearQuantile(Partition.uniform(1), [lo, hi])
