"""Piecewise log-affine densities extracted from quantile fits."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .quantiles import _frozen


@dataclass(frozen=True, eq=False)
class DensityModel:
    """Density made of contiguous segments ``(x_j, x_{j+1}]``.

    On segment ``j`` the density is ``exp(log_height[j] + log_slope[j] (x - x_j))``;
    piecewise-constant densities have ``log_slope == 0``.  ``atoms`` lists
    point masses ``(location, mass)`` that a degenerate fit may carry.
    """

    edges: np.ndarray
    log_height: np.ndarray
    log_slope: np.ndarray
    kind: str = "piecewise-constant"
    atoms: tuple = field(default_factory=tuple)

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        if edges.ndim != 1 or edges.size < 2:
            raise ValueError("need at least one segment")
        if np.any(np.diff(edges) <= 0):
            raise ValueError("segment edges must be strictly increasing")
        if np.shape(self.log_height) != (edges.size - 1,):
            raise ValueError("one log-height per segment")
        object.__setattr__(self, "edges", _frozen(edges))
        object.__setattr__(self, "log_height", _frozen(self.log_height))
        object.__setattr__(
            self, "log_slope", _frozen(np.broadcast_to(self.log_slope, edges.size - 1))
        )

    @classmethod
    def piecewise_constant(cls, edges, heights, atoms=()):
        heights = np.asarray(heights, dtype=float)
        return cls(edges, np.log(heights), np.zeros_like(heights), "piecewise-constant", tuple(atoms))

    @property
    def support(self) -> tuple[float, float]:
        lo, hi = float(self.edges[0]), float(self.edges[-1])
        for x, _ in self.atoms:
            lo, hi = min(lo, x), max(hi, x)
        return lo, hi

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def heights(self) -> np.ndarray:
        """Density value at the left end of each segment."""
        return np.exp(self.log_height)

    @property
    def right_heights(self) -> np.ndarray:
        return np.exp(self.log_height + self.log_slope * self.widths)

    def segment_masses(self) -> np.ndarray:
        w = self.widths
        bw = self.log_slope * w
        # int_0^w e^{b s} ds = w * expm1(b w) / (b w), stable at b = 0
        factor = np.where(np.abs(bw) > 1e-12, np.expm1(bw) / np.where(bw == 0, 1.0, bw), 1.0 + 0.5 * bw)
        return self.heights * w * factor

    def total_mass(self) -> float:
        return float(np.sum(self.segment_masses()) + sum(m for _, m in self.atoms))

    def pdf(self, x):
        """Density at ``x``; segments are read as ``(x_j, x_{j+1}]``, the first closed."""
        x = np.asarray(x, dtype=float)
        j = np.clip(np.searchsorted(self.edges, x, side="left") - 1, 0, self.edges.size - 2)
        val = np.exp(self.log_height[j] + self.log_slope[j] * (x - self.edges[j]))
        inside = (x >= self.edges[0]) & (x <= self.edges[-1])
        return np.where(inside, val, 0.0)

    def log_slope_jumps(self) -> np.ndarray:
        """Change of log-slope at interior edges (<= 0 for log-concave)."""
        return np.diff(self.log_slope)

    def continuity_gaps(self) -> np.ndarray:
        """Relative mismatch ``f(x_j^-) / f(x_j^+) - 1`` at interior edges."""
        left = self.log_height[:-1] + self.log_slope[:-1] * self.widths[:-1]
        return np.expm1(left - self.log_height[1:])

    def merged(self, rtol: float = 1e-9) -> "DensityModel":
        """Merge neighbouring segments that are continuations of each other."""
        keep = [0]
        for j in range(1, self.log_height.size):
            i = keep[-1]
            end_i = self.log_height[i] + self.log_slope[i] * (self.edges[j] - self.edges[i])
            same_slope = abs(self.log_slope[j] - self.log_slope[i]) <= rtol * max(1.0, abs(self.log_slope[i]))
            if not (same_slope and abs(end_i - self.log_height[j]) <= rtol):
                keep.append(j)
        keep = np.array(keep)
        edges = np.append(self.edges[keep], self.edges[-1])
        return DensityModel(edges, self.log_height[keep], self.log_slope[keep], self.kind, self.atoms)

    def plot_grid(self, n: int = 512):
        """``(x, f(x))`` on ``n`` equally spaced points across the support."""
        x = np.linspace(self.edges[0], self.edges[-1], n)
        return x, self.pdf(x)

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "edges": self.edges.tolist(),
            "log_height": self.log_height.tolist(),
            "log_slope": self.log_slope.tolist(),
            "atoms": [[float(x), float(m)] for x, m in self.atoms],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DensityModel":
        return cls(
            np.array(d["edges"], dtype=float),
            np.array(d["log_height"], dtype=float),
            np.array(d["log_slope"], dtype=float),
            d["kind"],
            tuple((float(x), float(m)) for x, m in d.get("atoms", [])),
        )
