import itertools

import numpy as np
import pytest

from wassproj.measures import build_empirical, discretize
from wassproj.monotone import build_monotone_qp, fit_monotone, monotone_density, monotone_objective
from wassproj.qpsolver import Status
from wassproj.quantiles import LinearQuantile, Partition, StepQuantile
from wassproj.transport import wp_power


def test_objective_zero_quantile():
    part = Partition.uniform(3)
    assert monotone_objective(np.zeros(4), part, [2.0, 2.0, 2.0]) == pytest.approx(4.0)


@pytest.mark.parametrize("b", [0.0, 0.7, 1.5, 3.0])
def test_objective_single_cell(b):
    got = monotone_objective([0.0, b], Partition.uniform(1), [1.0])
    assert got == pytest.approx((b * b - 3 * b + 3) / 3, abs=1e-15)


def test_objective_two_cells():
    assert monotone_objective([0.0, 0.5, 1.0], Partition.uniform(2), [0.25, 0.75]) == pytest.approx(1 / 48, abs=1e-15)


def test_objective_matches_transport(rng):
    for _ in range(20):
        K = int(rng.integers(1, 8))
        part = Partition(np.r_[0.0, np.sort(rng.uniform(0, 1, K - 1)), 1.0]) if K > 1 else Partition.uniform(1)
        q = np.r_[0.0, np.cumsum(rng.uniform(0, 1, K))]
        y = np.sort(rng.uniform(0, 3, K))
        ref = wp_power(LinearQuantile(part, q), StepQuantile(part, y), 2.0)
        assert monotone_objective(q, part, y) == pytest.approx(ref, rel=1e-12, abs=1e-14)


def test_qp_single_cell_entries():
    part = Partition.uniform(1)
    qp, const = build_monotone_qp(part, [1.7])
    assert qp.P.toarray()[0, 0] == pytest.approx(2 / 3)
    assert qp.a[0] == pytest.approx(-1.7)
    assert const == pytest.approx(1.7**2)


def test_qp_reproduces_objective_and_hessian(rng):
    K = 6
    part = Partition(np.r_[0.0, np.sort(rng.uniform(0, 1, K - 1)), 1.0])
    y = np.sort(rng.uniform(0.1, 2, K))
    qp, const = build_monotone_qp(part, y)
    x = rng.uniform(0, 2, K)
    f = lambda z: monotone_objective(np.r_[0.0, z], part, y)
    assert qp.objective(x) + const == pytest.approx(f(x), rel=1e-13)
    assert const == pytest.approx(float(np.dot(part.du, y * y)))
    # quadratic, so central differences are exact up to rounding
    e = 1e-3
    H = np.empty((K, K))
    for i, j in itertools.product(range(K), repeat=2):
        ei, ej = np.eye(K)[i] * e, np.eye(K)[j] * e
        H[i, j] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4 * e * e)
    np.testing.assert_allclose(qp.P.toarray(), H, atol=1e-7)


def test_fit_point_mass():
    fit = fit_monotone(build_empirical([1.0]), 8)
    np.testing.assert_allclose(fit.q, 1.5 * fit.partition.u, atol=1e-9)
    assert fit.report.status is Status.OPTIMAL


def _grid_objective(step, res=2001):
    """Brute force over convex, increasing q with one kink in K=2: ramp t0 u + t1 (u - 1/2)_+."""
    part = step.partition
    best = np.inf
    lo0, hi0, lo1, hi1 = 0.0, 4.0, 0.0, 8.0
    for _ in range(5):
        t0 = np.linspace(lo0, hi0, res)[:, None]
        t1 = np.linspace(lo1, hi1, res)[None, :]
        u = part.u
        vals = 0.0
        for i in range(part.K):
            q0 = t0 * u[i] + t1 * max(u[i] - 0.5, 0.0)
            q1 = t0 * u[i + 1] + t1 * max(u[i + 1] - 0.5, 0.0)
            yy = step.y[i]
            vals = vals + part.du[i] / 3 * (q0 * q0 + q1 * q1 + q0 * q1 - 3 * yy * (q0 + q1) + 3 * yy * yy)
        k = np.unravel_index(np.argmin(vals), vals.shape)
        best = float(vals[k])
        s0, s1 = (hi0 - lo0) / (res - 1), (hi1 - lo1) / (res - 1)
        c0, c1 = float(t0[k[0], 0]), float(t1[0, k[1]])
        lo0, hi0 = max(c0 - 3 * s0, 0.0), c0 + 3 * s0
        lo1, hi1 = max(c1 - 3 * s1, 0.0), c1 + 3 * s1
    return best


def test_fit_two_atoms_matches_grid():
    step = discretize(build_empirical([0.2, 1.0]), 2)
    fit = fit_monotone(step)
    assert fit.report.objective == pytest.approx(_grid_objective(step), abs=1e-5)


def test_fit_scale_equivariance(rng):
    m = build_empirical(rng.exponential(size=30))
    f1 = fit_monotone(m, 64)
    for b in (0.5, 2.0, 10.0):
        fb = fit_monotone(build_empirical(b * m.x, m.w), 64)
        np.testing.assert_allclose(fb.q, b * f1.q, rtol=1e-6, atol=1e-12 * b)


def test_fit_rejects_nonpositive():
    with pytest.raises(ValueError):
        fit_monotone(build_empirical([0.0, 1.0]))
    with pytest.raises(ValueError):
        fit_monotone(build_empirical([-1.0, 1.0]))


def test_active_set_and_admm_agree(rng):
    for _ in range(5):
        step = discretize(build_empirical(rng.gamma(0.8, size=15)), 24)
        a = fit_monotone(step, method="active-set")
        b = fit_monotone(step, method="admm")
        assert a.report.status is Status.OPTIMAL
        assert b.report.objective == pytest.approx(a.report.objective, rel=1e-5, abs=1e-8)


def test_density_examples():
    d = monotone_density(fit_monotone(build_empirical([1.0]), 1))
    np.testing.assert_allclose(d.heights, [2 / 3], rtol=1e-9)
    part = Partition.uniform(2)
    from wassproj.monotone import MonotoneFit
    from wassproj.qpsolver import SolverReport

    fit = MonotoneFit(part, np.array([0.0, 0.25, 1.0]), SolverReport(0, 0, 0, 0, Status.OPTIMAL), 0.0, StepQuantile(part, [0.1, 0.9]))
    d = fit.density()
    np.testing.assert_allclose(d.heights, [2.0, 2 / 3])
    assert d.total_mass() == pytest.approx(1.0, abs=1e-14)


def test_density_zero_length_cells_become_atoms():
    m = build_empirical([1.0, 1.0001, 5.0], [0.45, 0.45, 0.1])
    fit = fit_monotone(m, 40)
    d = fit.density()
    assert d.total_mass() == pytest.approx(1.0, abs=1e-10)
    assert np.all(np.diff(d.heights) <= 1e-9 * d.heights[:-1])
