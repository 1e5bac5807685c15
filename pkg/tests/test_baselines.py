import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wassproj.baselines import fit_grenander, gcm, grenander
from wassproj.measures import build_empirical
from wassproj.monotone import fit_monotone


def test_gcm_collinear():
    assert gcm([(0, 0), (0.5, 0.5), (1, 1)]) == [(0.0, 0.0), (1.0, 1.0)]


def test_gcm_drops_point_above_chord():
    assert gcm([(0, 0), (0.5, 1), (1, 1)]) == [(0.0, 0.0), (1.0, 1.0)]


def test_gcm_keeps_point_below_chord():
    assert gcm([(0, 0), (0.5, 0.1), (1, 1)]) == [(0.0, 0.0), (0.5, 0.1), (1.0, 1.0)]


@pytest.mark.parametrize("pts", [[], [(0, 0), (0, 1)], [(1, 0), (0, 1)]])
def test_gcm_rejects(pts):
    with pytest.raises(ValueError):
        gcm(pts)


points = st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=25)


@settings(max_examples=200, deadline=None)
@given(points)
def test_gcm_properties(vs):
    u = np.linspace(0.0, 1.0, len(vs)) if len(vs) > 1 else np.array([0.0])
    pts = list(zip(u, vs))
    hull = gcm(pts)
    hu = np.array([p[0] for p in hull])
    hv = np.array([p[1] for p in hull])
    assert hu[0] == u[0] and hu[-1] == u[-1]
    # below every input point
    interp = np.interp(u, hu, hv)
    assert np.all(interp <= np.array(vs) + 1e-9 * (1 + np.abs(vs)))
    # convex: slopes non-decreasing
    if hu.size > 2:
        s = np.diff(hv) / np.diff(hu)
        assert np.all(np.diff(s) >= -1e-9 * (1 + np.abs(s[:-1])))
    assert gcm(hull) == hull


def test_grenander_point_mass():
    d = grenander(build_empirical([1.0]))
    assert d.edges.tolist() == [0.0, 1.0] and d.heights.tolist() == pytest.approx([1.0])


def test_grenander_two_atoms():
    d = grenander(build_empirical([1.0, 2.0]))
    assert d.edges.tolist() == [0.0, 2.0] and d.heights.tolist() == pytest.approx([0.5])


def test_grenander_duplicates_merge():
    a, b = grenander(build_empirical([1.0, 1.0, 1.0])), grenander(build_empirical([1.0]))
    assert a.edges.tolist() == b.edges.tolist() and a.heights.tolist() == b.heights.tolist()


def test_grenander_rejects_nonpositive():
    with pytest.raises(ValueError):
        grenander(build_empirical([0.0, 1.0]))


def test_grenander_shape(rng):
    m = build_empirical(rng.exponential(size=200))
    fit = fit_grenander(m)
    d = fit.density()
    assert d.total_mass() == pytest.approx(1.0, abs=1e-10)
    assert np.all(np.diff(d.heights) <= 0)
    assert fit.support[1] == m.x[-1]
    # quantile lies below the empirical quantile
    u = np.linspace(1e-4, 1 - 1e-4, 999)
    assert np.all(fit.quantile()(u) <= m.quantile()(u) + 1e-12)


def test_wasserstein_fit_reaches_beyond_data(rng):
    m = build_empirical(rng.exponential(size=100))
    assert fit_monotone(m, 200).support[1] > fit_grenander(m).support[1]
