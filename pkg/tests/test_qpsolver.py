import itertools

import numpy as np
import pytest
import scipy.sparse as sp

from wassproj.monotone import build_monotone_qp
from wassproj.qpsolver import QuadraticProgram, SolverConfig, Status, solve_qp
from wassproj.quantiles import Partition


def test_unconstrained():
    x, rep = solve_qp(QuadraticProgram(2.0 * sp.eye(1), [-2.0], None, None))
    assert x[0] == pytest.approx(1.0) and rep.status is Status.OPTIMAL


def test_active_bound():
    x, rep = solve_qp(QuadraticProgram(2.0 * sp.eye(1), [-2.0], sp.eye(1), [2.0]))
    assert x[0] == pytest.approx(2.0, abs=1e-9) and rep.status is Status.OPTIMAL


def test_monotone_qp_single_cell():
    qp, _ = build_monotone_qp(Partition.uniform(1), [1.0])
    x, rep = solve_qp(qp)
    assert x[0] == pytest.approx(1.5, abs=1e-9) and rep.status is Status.OPTIMAL


def test_rejects_bad_shapes():
    with pytest.raises(ValueError):
        QuadraticProgram(sp.eye(2), [1.0], None, None)
    with pytest.raises(ValueError):
        QuadraticProgram(sp.csc_matrix([[1.0, 1.0], [0.0, 1.0]]), [1.0, 1.0], None, None)
    with pytest.raises(ValueError):
        QuadraticProgram(sp.eye(2), [1.0, 1.0], sp.eye(2), [0.0])


def test_infeasible_detected():
    C = sp.csr_matrix([[1.0], [-1.0]])
    _, rep = solve_qp(QuadraticProgram(sp.eye(1), [0.0], C, [1.0, 0.0]))
    assert rep.status is Status.INFEASIBLE


def _grid_min(qp, lo, hi, n=41, levels=6):
    """Exhaustive search over a box grid, zooming into the best feasible point."""
    dim = qp.n
    C, b = qp.C.toarray(), qp.b
    best_x = None
    for _ in range(levels):
        axes = [np.linspace(lo[i], hi[i], n) for i in range(dim)]
        pts = np.array(list(itertools.product(*axes)))
        feas = np.all(pts @ C.T >= b - 1e-12, axis=1)
        pts = pts[feas]
        vals = 0.5 * np.einsum("ij,jk,ik->i", pts, qp.P.toarray(), pts) + pts @ qp.a
        best_x = pts[np.argmin(vals)]
        step = (hi - lo) / (n - 1)
        lo, hi = best_x - 2 * step, best_x + 2 * step
    return qp.objective(best_x)


def test_small_problems_match_grid_oracle(rng):
    for _ in range(12):
        dim = int(rng.integers(1, 4))
        A = rng.normal(size=(dim, dim))
        P = A @ A.T + 0.1 * np.eye(dim)
        a = rng.normal(size=dim)
        m = int(rng.integers(1, 4))
        C = rng.normal(size=(m, dim))
        x_feas = rng.normal(size=dim)
        b = C @ x_feas - rng.uniform(0, 1, m)
        qp = QuadraticProgram(sp.csc_matrix(P), a, sp.csr_matrix(C), b)
        x, rep = solve_qp(qp, SolverConfig())
        assert rep.status is Status.OPTIMAL
        assert np.all(C @ x >= b - 1e-9)
        lam = rep.multipliers
        assert np.all(np.abs(lam * (C @ x - b)) <= 1e-9)
        span = 4.0 + 4.0 * np.abs(x)
        oracle = _grid_min(qp, x - span, x + span)
        assert rep.objective <= oracle + 1e-6
        assert rep.objective == pytest.approx(oracle, abs=1e-6)
