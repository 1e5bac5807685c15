import numpy as np
import pytest

from wassproj.density import DensityModel


def test_piecewise_constant_mass_and_pdf():
    d = DensityModel.piecewise_constant([0.0, 1.0, 3.0], [0.6, 0.2])
    assert d.total_mass() == pytest.approx(1.0)
    np.testing.assert_allclose(d.pdf([-1, 0, 0.5, 1.0, 2.0, 3.0, 4.0]), [0, 0.6, 0.6, 0.6, 0.2, 0.2, 0])


def test_log_affine_mass():
    d = DensityModel([0.0, np.log(2.0)], [0.0], [1.0], "piecewise-log-affine")
    assert d.total_mass() == pytest.approx(1.0, abs=1e-15)
    assert d.right_heights[0] == pytest.approx(2.0)


def test_tiny_slope_mass_stable():
    d = DensityModel([0.0, 1.0], [0.0], [1e-14], "piecewise-log-affine")
    assert d.total_mass() == pytest.approx(1.0, abs=1e-13)


def test_rejects_bad_edges():
    with pytest.raises(ValueError):
        DensityModel([0.0, 0.0], [0.0], [0.0])
    with pytest.raises(ValueError):
        DensityModel([0.0, 1.0, 2.0], [0.0], [0.0])


def test_continuity_and_jumps():
    d = DensityModel([0.0, 1.0, 2.0], [0.0, 1.0], [1.0, -1.0], "piecewise-log-affine")
    np.testing.assert_allclose(d.continuity_gaps(), [0.0], atol=1e-15)
    assert d.log_slope_jumps().tolist() == [-2.0]


def test_merge_and_dict_round_trip():
    d = DensityModel([0.0, 1.0, 2.0], [0.0, 0.5], [0.5, 0.5], "piecewise-log-affine", ((3.0, 0.1),))
    m = d.merged()
    assert m.edges.tolist() == [0.0, 2.0]
    e = DensityModel.from_dict(d.as_dict())
    assert e.edges.tolist() == d.edges.tolist() and e.atoms == d.atoms
    assert d.support == (0.0, 3.0)


def test_plot_grid():
    x, f = DensityModel.piecewise_constant([0.0, 2.0], [0.5]).plot_grid(512)
    assert x.size == 512 and np.all(np.diff(x) > 0) and np.all(f == 0.5)
