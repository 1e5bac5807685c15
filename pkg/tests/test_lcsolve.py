import numpy as np
import pytest

from wassproj import lcsolve
from wassproj.logconcave import fit_logconcave, logconcave_gradient, logconcave_objective
from wassproj.measures import build_empirical, discretize
from wassproj.qpsolver import SolverConfig, Status
from wassproj.verify import first_order_residual

from conftest import random_dataset


def test_cell_model_matches_objective(rng):
    K = 7
    u = np.r_[0.0, np.sort(rng.uniform(0, 1, K - 1)), 1.0]
    from wassproj.quantiles import Partition

    part = Partition(u)
    h = rng.uniform(0.3, 2.0, K + 1)
    y = np.sort(rng.normal(size=K))
    cm = lcsolve.cell_model(0.2, h, part.du, y)
    assert cm.f == pytest.approx(logconcave_objective(0.2, h, part, y), rel=1e-12)


def test_random_small_fits_are_certified(rng):
    for _ in range(25):
        m = random_dataset(rng, n_max=30)
        fit = fit_logconcave(m, 40)
        if fit.is_point_mass:
            continue
        assert fit.report.status is Status.OPTIMAL
        assert first_order_residual(fit) >= -1e-7


def test_projected_gradient_zero_at_interior_minimum():
    # uniform data: the fit is interior in (c, h_0, h_K) and has no kinks
    step = discretize(build_empirical(np.linspace(0.0, 1.0, 400)), 400)
    fit = fit_logconcave(step)
    assert fit.report.dual_residual <= SolverConfig().pg_tol


def test_solve_reports_iteration_cap():
    step = discretize(build_empirical([0.0, 0.1, 3.0, 3.2, 9.0]), 64)
    fit = fit_logconcave(step, cfg=SolverConfig(pg_max_iter=1))
    assert fit.report.status is not Status.OPTIMAL or fit.report.iterations <= 1
