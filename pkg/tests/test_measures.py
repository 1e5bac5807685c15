import numpy as np
import pytest

from wassproj.measures import (
    build_empirical,
    common_discretization,
    discretize,
    pushforward_affine,
    quantile_of,
    sample,
)
from wassproj.quantiles import LinearQuantile, Partition, StepQuantile, uniform
from wassproj.transport import w2_distance


def test_build_singleton():
    m = build_empirical([1.0])
    assert m.x.tolist() == [1.0] and m.w.tolist() == [1.0]


def test_build_two_point_weights():
    m = build_empirical([-1.0, 1.0], [0.5, 0.5])
    assert m.x.tolist() == [-1.0, 1.0]
    np.testing.assert_allclose(m.w, [0.5, 0.5])


def test_build_sorts_and_uniform_weights():
    m = build_empirical([3.0, 1.0, 2.0])
    assert m.x.tolist() == [1.0, 2.0, 3.0]
    np.testing.assert_allclose(m.w, [1 / 3] * 3)


def test_build_merges_duplicates():
    m = build_empirical([2.0, 1.0, 2.0, 2.0])
    assert m.x.tolist() == [1.0, 2.0]
    np.testing.assert_allclose(m.w, [0.25, 0.75])
    assert abs(m.w.sum() - 1.0) <= 1e-12


@pytest.mark.parametrize(
    "values, weights",
    [([], None), ([1.0, np.nan], None), ([1.0, np.inf], None), ([1.0, 2.0], [1.0, 0.0]), ([1.0, 2.0], [1.0, -1.0]), ([1.0], [1.0, 2.0])],
)
def test_build_rejects(values, weights):
    with pytest.raises(ValueError):
        build_empirical(values, weights)


def test_quantile_of_examples():
    assert quantile_of(build_empirical([1.0]), 0.5) == 1.0
    m = build_empirical([0.2, 1.0], [0.5, 0.5])
    assert quantile_of(m, 0.75) == 1.0
    assert quantile_of(m, 0.5) == 0.2


@pytest.mark.parametrize("u", [0.0, 1.0, -0.1, 1.5])
def test_quantile_of_domain(u):
    with pytest.raises(ValueError):
        quantile_of(build_empirical([1.0, 2.0]), u)


def test_quantile_of_monotone_and_left_continuous(rng):
    m = build_empirical(rng.normal(size=30), rng.uniform(0.1, 1, 30))
    u = np.linspace(1e-6, 1 - 1e-6, 20001)
    q = quantile_of(m, u)
    assert np.all(np.diff(q) >= 0)
    # left-continuity: at each CDF jump F_i the value is x_i, just above it x_{i+1}
    F = m.cumulative[:-1]
    np.testing.assert_array_equal(quantile_of(m, F), m.x[:-1])
    np.testing.assert_array_equal(quantile_of(m, np.nextafter(F, 1.0)), m.x[1:])


def test_discretize_point_mass():
    s = discretize(build_empirical([1.0]), 4)
    np.testing.assert_allclose(s.partition.u, [0, 0.25, 0.5, 0.75, 1])
    np.testing.assert_array_equal(s.y, [1, 1, 1, 1])


def test_discretize_two_atoms():
    s = discretize(build_empirical([0.2, 1.0], [0.5, 0.5]), 4)
    np.testing.assert_array_equal(s.y, [0.2, 0.2, 1, 1])


def test_discretize_merges_weight_knots():
    s = discretize(build_empirical([1.0, 2.0], [0.3, 0.7]), 2)
    np.testing.assert_allclose(s.partition.u, [0, 0.3, 0.5, 1])
    np.testing.assert_array_equal(s.y, [1, 2, 2])


def test_discretize_rejects_bad_K():
    with pytest.raises(ValueError):
        discretize(build_empirical([1.0]), 0)


def test_discretize_reproduces_quantile_at_midpoints(rng):
    m = build_empirical(rng.gamma(2.0, size=40))
    s = discretize(m, 64)
    mid = 0.5 * (s.partition.u[:-1] + s.partition.u[1:])
    np.testing.assert_array_equal(s(mid), quantile_of(m, mid))


def test_common_discretization_shares_partition(rng):
    a, b = build_empirical(rng.normal(size=7)), build_empirical(rng.normal(size=11))
    sa, sb = common_discretization([a, b], 16)
    assert sa.partition == sb.partition


def test_sample_constant_and_deterministic():
    assert np.all(sample(StepQuantile(Partition.uniform(1), [2.5]), 10, 3) == 2.5)
    q = uniform(0.0, 1.0)
    np.testing.assert_array_equal(sample(q, 100, 7), sample(q, 100, 7))
    with pytest.raises(ValueError):
        sample(q, 0, 1)


def test_sample_uniform_ks():
    x = np.sort(sample(uniform(0.0, 1.0), 100_000, 11))
    n = x.size
    ks = max(np.max(np.arange(1, n + 1) / n - x), np.max(x - np.arange(n) / n))
    assert ks < 0.01


def test_sample_converges_in_w2():
    q = uniform(0.0, 1.0)
    meds = []
    for n in (100, 1000, 10000):
        d = [w2_distance(build_empirical(sample(q, n, s)), q) for s in range(9)]
        meds.append(np.median(d))
    assert meds[0] > meds[1] > meds[2]


def test_pushforward_examples():
    q = LinearQuantile(Partition.uniform(1), [0.0, 1.5])
    assert pushforward_affine(q, 0.0, 1.0)(0.3) == pytest.approx(q(0.3))
    assert pushforward_affine(q, 0.0, 2.0)(0.4) == pytest.approx(1.2)
    r = pushforward_affine(uniform(0.0, 1.0), 0.0, -1.0)
    u = np.linspace(0.01, 0.99, 7)
    np.testing.assert_allclose(r(u), u - 1.0)
    with pytest.raises(ValueError):
        pushforward_affine(q, 1.0, 0.0)


def test_pushforward_composes(rng):
    m = build_empirical(rng.normal(size=9))
    q = m.quantile()
    a1, b1, a2, b2 = 0.3, -2.0, -1.0, 0.5
    twice = pushforward_affine(pushforward_affine(q, a1, b1), a2, b2)
    once = pushforward_affine(q, a2 + b2 * a1, b2 * b1)
    u = rng.uniform(0.001, 0.999, 200)
    np.testing.assert_allclose(twice(u), once(u), atol=1e-12)
    em = pushforward_affine(m, a1, b1)
    np.testing.assert_allclose(np.sort(em.x), np.sort(a1 + b1 * m.x))
