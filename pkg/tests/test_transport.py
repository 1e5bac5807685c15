import numpy as np
import pytest
from scipy import integrate

from wassproj.measures import build_empirical, pushforward_affine
from wassproj.quantiles import LinearQuantile, LogConcaveQuantile, Partition, StepQuantile, point_mass, uniform
from wassproj.transport import wp_distance, wp_power


def _random_quantile(rng, kind):
    K = int(rng.integers(1, 6))
    part = Partition(np.r_[0.0, np.sort(rng.uniform(0.05, 0.95, K - 1)), 1.0]) if K > 1 else Partition.uniform(1)
    if kind == "step":
        return StepQuantile(part, np.sort(rng.normal(size=K)))
    if kind == "linear":
        return LinearQuantile(part, np.sort(rng.normal(size=K + 1)))
    return LogConcaveQuantile(part, rng.normal(), rng.uniform(0.2, 2.0, K + 1))


def _quad_power(qa, qb, p):
    part = qa.partition.merge(qb.partition)
    total = 0.0
    for lo, hi in zip(part.u[:-1], part.u[1:]):
        val, _ = integrate.quad(lambda v: abs(qa(v) - qb(v)) ** p, lo, hi, epsabs=1e-14, epsrel=1e-13, limit=200)
        total += val
    return total


def test_identity_and_constant_shift():
    q = uniform(-1.0, 2.0)
    assert wp_distance(q, q) == 0.0
    for p in (1.0, 1.5, 2.0, 3.0):
        assert wp_distance(point_mass(0.0), point_mass(-2.5), p) == pytest.approx(2.5, abs=1e-12)


def test_point_mass_vs_uniform():
    assert wp_distance(point_mass(1.0), uniform(0.0, 1.5), 2.0) == pytest.approx(0.5, abs=1e-12)


def test_rejects_p_below_one():
    with pytest.raises(ValueError):
        wp_distance(point_mass(0.0), point_mass(1.0), 0.5)


@pytest.mark.parametrize("ka", ["step", "linear", "lc"])
@pytest.mark.parametrize("kb", ["step", "linear", "lc"])
@pytest.mark.parametrize("p", [1.0, 2.0, 3.5])
def test_matches_quadrature_oracle(rng, ka, kb, p):
    for _ in range(4):
        qa, qb = _random_quantile(rng, ka), _random_quantile(rng, kb)
        assert wp_power(qa, qb, p) == pytest.approx(_quad_power(qa, qb, p), abs=1e-9)


def test_metric_axioms(rng):
    kinds = ["step", "linear", "lc"]
    for _ in range(30):
        a, b, c = (_random_quantile(rng, kinds[int(rng.integers(3))]) for _ in range(3))
        dab, dba = wp_distance(a, b), wp_distance(b, a)
        assert dab >= 0 and dab == pytest.approx(dba, abs=1e-12)
        assert wp_distance(a, c) <= dab + wp_distance(b, c) + 1e-9


def test_affine_scaling(rng):
    ma, mb = build_empirical(rng.normal(size=8)), build_empirical(rng.normal(size=5))
    base = wp_distance(ma, mb)
    for a, b in [(1.0, 2.0), (-3.0, -0.5), (0.0, -1.0)]:
        assert wp_distance(pushforward_affine(ma, a, b), pushforward_affine(mb, a, b)) == pytest.approx(abs(b) * base, rel=1e-12)
