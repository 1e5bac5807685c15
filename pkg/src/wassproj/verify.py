"""Optimality certificates, projection-map checks and Monte-Carlo consistency.

A projection ``Q_hat`` of ``Q_0`` onto a convex set of quantile functions is
characterised by ``int (Q_hat - Q_0) G du >= 0`` for every feasible direction
``G`` at ``Q_hat``.  :func:`first_order_residual` evaluates that inequality
on a finite generator set and returns the worst value, so a negative number
of any size is a violation.  Generators are scaled to unit L2 norm; the
residual is then the rate at which the distance to the data can be reduced
per unit move, and it carries the units of the data.

The check is only as strong as the generator set: it certifies the fit as a
stationary point of the discretised program, not of the continuum problem.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import lcsolve
from .baselines import GrenanderFit
from .logconcave import LogConcaveFit, fit_logconcave, logconcave_gradient
from .measures import EmpiricalMeasure, build_empirical, common_discretization, discretize
from .monotone import MonotoneFit, fit_monotone
from .phi import phi, phi_prime
from .qpsolver import SolverConfig
from .quantiles import (
    FunctionQuantile,
    LinearQuantile,
    LogConcaveQuantile,
    Partition,
    StepQuantile,
)
from .transport import as_quantile, w2_distance, wp_power

logger = logging.getLogger(__name__)

MODELS = ("monotone", "logconcave")
FEASIBILITY_RTOL = 1e-9

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


def _check_model(model):
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}; choose from {MODELS}")


def fit_model(data, model: str, K: int | None = None, cfg: SolverConfig | None = None):
    """Dispatch to :func:`fit_monotone` or :func:`fit_logconcave`."""
    _check_model(model)
    if model == "monotone":
        return fit_monotone(data, K, cfg)
    return fit_logconcave(data, K, cfg)


# --- first-order residual -----------------------------------------------------


def _unpack(fit, data):
    if isinstance(fit, (MonotoneFit, LogConcaveFit, GrenanderFit)):
        if data is None:
            data = fit.data
        fit = fit.quantile()
    if data is None:
        raise ValueError("data quantile is required when passing a bare quantile")
    data = as_quantile(data)
    if not isinstance(data, StepQuantile):
        raise TypeError("data must be a step quantile or an empirical measure")
    return fit, data


def _monotone_values(qhat: LinearQuantile, data: StepQuantile) -> np.ndarray:
    u, q = qhat.partition.u, qhat.q
    scale = max(abs(float(q[-1])), float(np.max(np.abs(data.y))), 1e-300)
    if abs(q[0]) > FEASIBILITY_RTOL * scale:
        raise ValueError("infeasible monotone quantile: Q(0) must be 0")
    du = qhat.partition.du
    s = np.diff(q) / du
    if s[0] < -FEASIBILITY_RTOL * scale or np.any(np.diff(s) < -FEASIBILITY_RTOL * scale / du.min()):
        raise ValueError("infeasible monotone quantile: slopes must be non-negative and non-decreasing")

    # exact moments of r = Q_hat - Q_0 on the merged partition
    part = qhat.partition.merge(data.partition)
    a, b = part.u[:-1], part.u[1:]
    fine_q = np.interp(part.u, u, q)
    y = data.refine(part).y
    ra, rb = fine_q[:-1] - y, fine_q[1:] - y
    w = b - a
    m0 = w * (ra + rb) / 2.0
    m1 = w * (a * (2.0 * ra + rb) + b * (ra + 2.0 * rb)) / 6.0
    # tails int_{u_j}^1 r and int_{u_j}^1 u r at the fit's knots u_0 .. u_{K-1}
    tail0 = np.cumsum(m0[::-1])[::-1]
    tail1 = np.cumsum(m1[::-1])[::-1]
    idx = np.searchsorted(part.u, u[:-1])
    ramp = tail1[idx] - u[:-1] * tail0[idx]
    ramp_norm = np.sqrt((1.0 - u[:-1]) ** 3 / 3.0)
    vals = [ramp / ramp_norm]

    # slope drops t_j (t_0 is the first slope): removable where positive
    t = np.diff(np.concatenate([[0.0], s]))
    # rounding in q shows up in the slopes divided by the cell widths
    inv = 1.0 / du
    noise = 16.0 * np.finfo(float).eps * float(np.max(np.abs(q))) * (inv + np.r_[0.0, inv[:-1]])
    kink_tol = np.maximum(noise, 1e-12 * max(float(np.max(np.abs(s))), 1e-300))
    vals.append(-(ramp / ramp_norm)[t > kink_tol])

    # dilation Q_hat -> (1 +- e) Q_hat
    qnorm = np.sqrt(float(np.dot(du, (q[:-1] ** 2 + q[:-1] * q[1:] + q[1:] ** 2) / 3.0)))
    if qnorm > 0:
        qa, qb = fine_q[:-1], fine_q[1:]
        dil = float(np.sum(w * (2.0 * ra * qa + ra * qb + rb * qa + 2.0 * rb * qb) / 6.0))
        vals.append(np.array([dil, -dil]) / qnorm)
    return np.concatenate(vals)


def _hat_matrix(u):
    """Columns ``dh/dtheta`` for ``theta = (h_0, h_K, t_1 .. t_{K-1})``."""
    uu = u[:, None]
    uj = u[None, 1:-1]
    kinks = np.minimum(uu * (1.0 - uj), uj * (1.0 - uu))
    return np.column_stack([1.0 - u, u, kinks])


def direction_norms(lc: LogConcaveQuantile, chunk: int = 512) -> np.ndarray:
    """L2 norms of ``dQ/dtheta_j`` in cone coordinates.

    Within cell ``k``, with ``a = h_{k-1}``, ``b = h_k``, ``s in [0, 1]`` and
    ``eta = (b / a - 1) s``, ``Q = q_{k-1} + du_k (s / a) Phi(eta)``, so

        dQ/da = -du_k s / a^2 (Phi(eta) + b s Phi'(eta) / a),
        dQ/db =  du_k s^2 Phi'(eta) / a^2,

    and ``q_{k-1}`` collects the full-cell (``s = 1``) terms of earlier cells.
    The squared norms are integrated with 8-point Gauss-Legendre per cell.
    """
    part = lc.partition
    u, du, h = part.u, part.du, lc.h
    a, b = h[:-1], h[1:]
    s = _GL_X

    def local(sv):
        eta = (b[:, None] / a[:, None] - 1.0) * sv
        la = -du[:, None] * sv / a[:, None] ** 2 * (phi(eta) + b[:, None] * sv * phi_prime(eta) / a[:, None])
        lb = du[:, None] * sv**2 * phi_prime(eta) / a[:, None] ** 2
        return la, lb

    la, lb = local(s[None, :])
    la1, lb1 = local(np.ones((1, 1)))
    H = _hat_matrix(u)
    norms = np.empty(H.shape[1])
    for start in range(0, H.shape[1], chunk):
        Hc = H[:, start:start + chunk]
        inc = la1 * Hc[:-1] + lb1 * Hc[1:]  # K x m
        before = np.vstack([np.zeros((1, Hc.shape[1])), np.cumsum(inc, axis=0)[:-1]])
        # G on the nodes of cell k: before[k] + la[k, s] H[k] + lb[k, s] H[k+1]
        G = before[:, None, :] + la[:, :, None] * Hc[:-1, None, :] + lb[:, :, None] * Hc[1:, None, :]
        sq = np.einsum("ksm,s,k->m", G * G, _GL_W, du)
        norms[start:start + chunk] = np.sqrt(sq)
    return norms


def _interp_pullback(g_fine, u_fine, u):
    """Transpose of linear interpolation from knots ``u`` onto ``u_fine``."""
    k = np.clip(np.searchsorted(u, u_fine, side="right") - 1, 0, u.size - 2)
    w_hi = (u_fine - u[k]) / (u[k + 1] - u[k])
    out = np.zeros(u.size)
    np.add.at(out, k, g_fine * (1.0 - w_hi))
    np.add.at(out, k + 1, g_fine * w_hi)
    return out


def _logconcave_values(qhat, data: StepQuantile, eps: float, nonneg_support: bool) -> np.ndarray:
    if isinstance(qhat, StepQuantile) and qhat.partition.K == 1:
        # a point-mass fit: only translations move it within the model
        r = float(qhat.y[0]) - data.mean()
        return np.array([r, -r]) if not nonneg_support or qhat.y[0] > 0 else np.array([r])
    if not isinstance(qhat, LogConcaveQuantile):
        raise TypeError("log-concave residual needs a LogConcaveQuantile fit")
    u, h = qhat.partition.u, qhat.h
    theta = lcsolve.to_cone(h, u)
    noise = lcsolve.kink_noise(h, u)
    if np.any(h <= 0) or np.any(theta[2:] < -max(noise, FEASIBILITY_RTOL * float(np.max(h)))):
        raise ValueError("infeasible log-concave quantile: h must be positive and concave")

    part = qhat.partition.merge(data.partition)
    fine = qhat.refine(part)
    g = logconcave_gradient(fine.c, fine.h, part, data.refine(part).y)
    # int r G = gradient / 2; pull h-gradient back to the fit's knots, then the cone
    g_c = 0.5 * g[0]
    g_theta = 0.5 * lcsolve.cone_pullback(_interp_pullback(g[1:], part.u, u), u)
    norms = direction_norms(qhat)

    vals = [np.array([g_c])]
    if not (nonneg_support and qhat.c <= 0):
        vals.append(np.array([-g_c]))
    unit = g_theta / norms
    vals.append(unit)
    removable = np.concatenate([theta[:2] > eps * (1.0 + 1e-9), theta[2:] > noise])
    vals.append(-unit[removable])
    # dilation about 0: dQ = c * 1 - sum_j theta_j dQ/dtheta_j
    dil = qhat.c * g_c - float(np.dot(theta, g_theta))
    qnorm = np.sqrt(max(wp_power(qhat, StepQuantile(Partition.uniform(1), [0.0])), 0.0))
    if qnorm > 0:
        vals.append(np.array([dil, -dil]) / qnorm)
    return np.concatenate(vals)


def first_order_residual(
    fit, data=None, model: str | None = None, *, eps: float = 0.0, nonneg_support: bool = False
) -> float:
    """Most violated first-order inequality ``int (Q_hat - Q_0) G du`` over generators.

    Parameters
    ----------
    fit : MonotoneFit, LogConcaveFit, LinearQuantile or LogConcaveQuantile
        The candidate projection.
    data : StepQuantile or EmpiricalMeasure, optional
        The data quantile; defaults to ``fit.data`` for fit objects.
    model : {"monotone", "logconcave"}, optional
        Inferred from a fit object when omitted.
    eps : float
        Lower bound on ``h`` used by the log-concave fit; end values at the
        bound are not allowed to decrease.
    nonneg_support : bool
        Log-concave only: a fit with ``c = 0`` may not translate left.

    Returns
    -------
    float
        The minimum over unit-norm generators.  Monotone generators are the
        ramps ``(u - u_j)_+`` (``u_0 = 0`` gives the identity), their negatives
        where the fit has a kink, and the dilations ``+-Q_hat``.  Log-concave
        generators are the translations ``+-1``, the dilations ``+-Q_hat`` and
        the linearised moves of each cone coordinate of ``h`` (end values and
        slope drops) in every feasible sign.

    Raises
    ------
    ValueError
        If the fit is infeasible for the model.
    """
    if model is None:
        model = getattr(fit, "model", None)
        if model == "grenander":
            model = "monotone"
    _check_model(model)
    if isinstance(fit, LogConcaveFit):
        eps = max(eps, fit.eps)
    qhat, q0 = _unpack(fit, data)
    if model == "monotone":
        if not isinstance(qhat, LinearQuantile):
            raise TypeError("monotone residual needs a piecewise-affine fit")
        vals = _monotone_values(qhat, q0)
    else:
        vals = _logconcave_values(qhat, q0, eps, nonneg_support)
    return float(np.min(vals))


def structural_checks(fit) -> dict:
    """Shape and unit-mass checks on the fitted density.

    Monotone and Grenander fits must be piecewise constant and
    non-increasing; log-concave fits continuous with non-increasing
    log-slope.  All must carry unit mass to 1e-10.
    """
    if getattr(fit, "is_point_mass", False):
        return {"point_mass": True}
    d = fit.density()
    out = {"unit_mass": abs(d.total_mass() - 1.0) <= 1e-10}
    if fit.model == "logconcave":
        out["continuous"] = bool(np.all(np.abs(d.continuity_gaps()) <= 1e-8))
        # log-slopes have units 1/x, so rounding is judged against the support width too
        scale = max(float(np.max(np.abs(d.log_slope))), 1.0 / (d.edges[-1] - d.edges[0]))
        out["log_slope_non_increasing"] = bool(np.all(d.log_slope_jumps() <= 1e-8 * scale))
    else:
        h = d.heights
        out["piecewise_constant"] = bool(np.all(d.log_slope == 0))
        out["non_increasing"] = bool(np.all(np.diff(h) <= 1e-9 * h[:-1]))
    return out


# --- non-expansiveness ----------------------------------------------------------


def nonexpansiveness_gap(
    ma: EmpiricalMeasure, mb: EmpiricalMeasure, model: str, K: int = 200, cfg: SolverConfig | None = None
) -> float:
    """``W2(data_a, data_b) - W2(fit_a, fit_b)`` with both data on one partition.

    Projection onto a convex set is 1-Lipschitz, so the gap should be
    non-negative up to solver error.

    Examples
    --------
    >>> from wassproj.measures import build_empirical
    >>> round(nonexpansiveness_gap(build_empirical([1.0]), build_empirical([2.0]), "monotone"), 4)
    0.134
    """
    _check_model(model)
    qa, qb = common_discretization([ma, mb], K)
    fa = fit_model(qa, model, cfg=cfg)
    fb = fit_model(qb, model, cfg=cfg)
    return w2_distance(qa, qb) - w2_distance(fa.quantile(), fb.quantile())


# --- truths ---------------------------------------------------------------------


_FAMILIES = {
    "uniform": lambda p: stats.uniform(
        loc=float(p.get("low", 0.0)), scale=float(p.get("high", 1.0)) - float(p.get("low", 0.0))
    ),
    "exponential": lambda p: stats.expon(scale=float(p.get("scale", 1.0))),
    "gamma": lambda p: stats.gamma(float(p["shape"]), scale=float(p.get("scale", 1.0))),
    "normal": lambda p: stats.norm(loc=float(p.get("loc", 0.0)), scale=float(p.get("scale", 1.0))),
}


@dataclass(frozen=True)
class Truth:
    """A sampleable law with a known quantile function.

    Built by :func:`parse_truth` from a JSON-style spec, e.g.
    ``{"family": "gamma", "shape": 5, "scale": 1.5}`` or
    ``{"family": "mixture", "weights": [0.6, 0.4], "components": [...]}``.
    """

    spec: dict = field(hash=False)

    @property
    def family(self) -> str:
        return self.spec["family"]

    @property
    def name(self) -> str:
        if self.family == "mixture":
            parts = [f"{w:g}*{Truth(c).name}" for w, c in zip(self.spec["weights"], self.spec["components"])]
            return " + ".join(parts)
        args = ",".join(f"{k}={v:g}" for k, v in self.spec.items() if k != "family")
        return f"{self.family}({args})"

    def _components(self):
        if self.family == "mixture":
            return [Truth(c) for c in self.spec["components"]], np.asarray(self.spec["weights"], float)
        return [self], np.ones(1)

    def _dist(self):
        return _FAMILIES[self.family](self.spec)

    def cdf(self, x):
        if self.family == "point":
            return (np.asarray(x, dtype=float) >= float(self.spec.get("at", 1.0))).astype(float)
        if self.family != "mixture":
            return self._dist().cdf(x)
        comps, w = self._components()
        return sum(wk * c.cdf(x) for c, wk in zip(comps, w))

    def ppf(self, v):
        v = np.asarray(v, dtype=float)
        if self.family == "point":
            return np.full(v.shape, float(self.spec.get("at", 1.0)))
        if self.family != "mixture":
            return self._dist().ppf(v)
        comps, _ = self._components()
        cq = np.stack([c.ppf(v) for c in comps])
        lo, hi = cq.min(axis=0), cq.max(axis=0)
        # the mixture quantile lies between the component quantiles; bisect
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            below = self.cdf(mid) < v
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return hi

    def quantile(self) -> FunctionQuantile:
        return FunctionQuantile(self.ppf, self.name)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        v = rng.random(n)
        v = np.where(v == 0.0, np.nextafter(0.0, 1.0), v)
        if self.family != "mixture":
            return self.ppf(v)
        comps, w = self._components()
        which = rng.choice(len(comps), size=n, p=w / w.sum())
        out = np.empty(n)
        for k, c in enumerate(comps):
            sel = which == k
            out[sel] = c.ppf(v[sel])
        return out

    def in_model(self, model: str) -> bool:
        """Whether the law is known to lie in the model (then it is its own projection)."""
        f, p = self.family, self.spec
        if model == "monotone":
            return (f == "exponential") or (f == "uniform" and float(p.get("low", 0.0)) == 0.0) or (
                f == "gamma" and float(p["shape"]) <= 1.0
            )
        return f in ("normal", "uniform", "exponential", "point") or (f == "gamma" and float(p["shape"]) >= 1.0)


def parse_truth(spec) -> Truth:
    """Validate a truth spec (a dict, or a bare family name with default parameters).

    Raises
    ------
    ValueError
        Unknown family, malformed mixture, or bad parameters.
    """
    if isinstance(spec, Truth):
        return spec
    if isinstance(spec, str):
        spec = {"family": spec}
    if not isinstance(spec, dict) or "family" not in spec:
        raise ValueError(f"truth spec must name a family: {spec!r}")
    spec = dict(spec)
    fam = spec["family"]
    if fam == "mixture":
        comps, w = spec.get("components"), spec.get("weights")
        if not comps or len(comps) != 2 or w is None or len(w) != 2:
            raise ValueError("a mixture needs two components and two weights")
        if min(w) < 0 or sum(w) <= 0:
            raise ValueError("mixture weights must be non-negative with positive sum")
        spec["components"] = [parse_truth(c).spec for c in comps]
        if any(c["family"] == "mixture" for c in spec["components"]):
            raise ValueError("nested mixtures are not supported")
        total = float(sum(w))
        spec["weights"] = [float(x) / total for x in w]
        return Truth(spec)
    if fam == "point":
        if not np.isfinite(float(spec.get("at", 1.0))):
            raise ValueError("point location must be finite")
        return Truth(spec)
    if fam not in _FAMILIES:
        known = sorted(_FAMILIES) + ["mixture", "point"]
        raise ValueError(f"unknown truth family {fam!r}; choose from {known}")
    try:
        _FAMILIES[fam](spec)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"bad parameters for {fam}: {exc}") from exc
    if fam == "gamma" and float(spec["shape"]) <= 0:
        raise ValueError("gamma shape must be positive")
    return Truth(spec)


# --- consistency experiment -------------------------------------------------------


REFERENCE_K = 2000


def reference_quantile(truth: Truth, model: str, K: int = REFERENCE_K):
    """The projection of the truth onto the model.

    The truth itself when it is known to be in the model; otherwise the fit
    to its quantile discretised at the midpoints of a uniform ``K``-grid.
    """
    if truth.in_model(model):
        return truth.quantile()
    part = Partition.uniform(K)
    mid = 0.5 * (part.u[:-1] + part.u[1:])
    return fit_model(StepQuantile(part, truth.ppf(mid)), model).quantile()


def _rep_seed(seed: int, rep: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(seed), spawn_key=(int(rep),))


def _run_rep(args):
    truth_spec, ns, rep, model, K, seed, ref, cfg = args
    truth = Truth(truth_spec)
    children = _rep_seed(seed, rep).spawn(len(ns))
    fit_w2, emp_w2 = [], []
    for n, child in zip(ns, children):
        x = truth.sample(np.random.default_rng(child), int(n))
        m = build_empirical(x)
        fit = fit_model(m, model, K, cfg)
        fit_w2.append(w2_distance(fit.quantile(), ref))
        emp_w2.append(w2_distance(m.quantile(), truth.quantile()))
    return rep, fit_w2, emp_w2


@dataclass(frozen=True)
class ConsistencyReport:
    """Per-``n`` summaries of ``W2(fit, reference)`` over repetitions.

    ``fit_w2[i, r]`` is the distance for ``ns[i]`` in repetition ``r``;
    ``empirical_w2`` holds ``W2(empirical, truth)`` for the same samples.
    """

    truth: str
    model: str
    ns: tuple
    reps: int
    K: int
    seed: int
    fit_w2: np.ndarray = field(repr=False)
    empirical_w2: np.ndarray = field(repr=False)

    def rows(self) -> list[dict]:
        out = []
        for i, n in enumerate(self.ns):
            d = self.fit_w2[i]
            q10, med, q90 = np.quantile(d, [0.1, 0.5, 0.9])
            out.append(
                {
                    "n": int(n),
                    "median": float(med),
                    "q10": float(q10),
                    "q90": float(q90),
                    "mean": float(np.mean(d)),
                    "empirical_median": float(np.median(self.empirical_w2[i])),
                }
            )
        return out

    @property
    def medians(self) -> np.ndarray:
        return np.median(self.fit_w2, axis=1)

    def as_dict(self) -> dict:
        return {
            "truth": self.truth,
            "model": self.model,
            "ns": [int(n) for n in self.ns],
            "reps": self.reps,
            "K": self.K,
            "seed": self.seed,
            "rows": self.rows(),
        }


def consistency_experiment(
    truth,
    ns,
    reps: int,
    model: str,
    K: int = 200,
    seed: int = 0,
    workers: int = 1,
    cfg: SolverConfig | None = None,
) -> ConsistencyReport:
    """Median and spread of ``W2(fit, projection of the truth)`` as ``n`` grows.

    Parameters
    ----------
    truth : dict, str or Truth
        See :func:`parse_truth`.
    ns : sequence of int
        Sample sizes.
    reps : int
        Repetitions per sample size.
    model : {"monotone", "logconcave"}
    K : int
        Grid size passed to the fit.
    seed : int
        Repetition ``r`` draws from ``SeedSequence(seed, spawn_key=(r,))``,
        one child stream per sample size, so results do not depend on
        ``workers``.
    workers : int
        Worker processes; repetitions are merged back by index.
    cfg : SolverConfig, optional
        Passed to every fit.
    """
    _check_model(model)
    truth = parse_truth(truth)
    ns = tuple(int(n) for n in ns)
    if not ns or min(ns) < 1:
        raise ValueError("ns must be positive integers")
    if int(reps) < 1:
        raise ValueError("reps must be positive")
    ref = reference_quantile(truth, model)
    jobs = [(truth.spec, ns, r, model, K, seed, ref, cfg) for r in range(int(reps))]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_rep, jobs))
    else:
        results = [_run_rep(j) for j in jobs]
    results.sort(key=lambda t: t[0])
    fit_w2 = np.array([r[1] for r in results]).T
    emp_w2 = np.array([r[2] for r in results]).T
    return ConsistencyReport(truth.name, model, ns, int(reps), int(K), int(seed), fit_w2, emp_w2)


def discretization_sandwich(m: EmpiricalMeasure, truth, model: str, K: int) -> tuple[float, float]:
    """``(W2(fit, reference), W2(empirical, truth))`` for one sample at grid size ``K``."""
    truth = parse_truth(truth)
    fit = fit_model(discretize(m, K), model)
    ref = reference_quantile(truth, model)
    return w2_distance(fit.quantile(), ref), w2_distance(m.quantile(), truth.quantile())


__all__ = [
    "first_order_residual",
    "nonexpansiveness_gap",
    "consistency_experiment",
    "ConsistencyReport",
    "Truth",
    "parse_truth",
    "reference_quantile",
    "discretization_sandwich",
    "fit_model",
    "structural_checks",
]
