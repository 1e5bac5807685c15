import math

import mpmath
import numpy as np
import pytest
from scipy import integrate

from wassproj.phi import phi, phi_moments, phi_moments_prime, phi_prime

mpmath.mp.dps = 40


def _phi_mp(x):
    x = mpmath.mpf(x)
    return mpmath.mpf(1) if x == 0 else mpmath.log1p(x) / x


def test_examples():
    assert phi(0.0) == 1.0
    assert phi(math.e - 1) == pytest.approx(1 / (math.e - 1), rel=1e-15)
    assert phi(-0.5) == pytest.approx(2 * math.log(2), rel=1e-15)


@pytest.mark.parametrize("bad", [-1.0, -2.0])
def test_domain(bad):
    with pytest.raises(ValueError):
        phi(bad)
    with pytest.raises(ValueError):
        phi_moments(bad)


def test_against_high_precision():
    xs = np.concatenate([-np.logspace(-12, np.log10(0.99), 60), np.logspace(-12, 3, 80), [0.0]])
    got = phi(xs)
    want = np.array([float(_phi_mp(x)) for x in xs])
    np.testing.assert_allclose(got, want, rtol=4e-16, atol=0)


def test_phi_prime_against_high_precision():
    xs = np.concatenate([-np.logspace(-10, np.log10(0.9), 40), np.logspace(-10, 2, 40)])
    want = np.array([float(mpmath.diff(_phi_mp, x)) for x in xs])
    np.testing.assert_allclose(phi_prime(xs), want, rtol=1e-13)


def test_convex_positive_decreasing():
    x = np.linspace(-0.99, 20, 4001)
    f = phi(x)
    assert np.all(f > 0) and np.all(np.diff(f) < 0)
    assert np.all(f[:-2] - 2 * f[1:-1] + f[2:] >= -1e-15)


def test_moments_examples():
    A, B = phi_moments(0.0)
    assert (A, B) == (pytest.approx(0.5, abs=1e-16), pytest.approx(1 / 3, abs=1e-16))
    assert phi_moments(1.0)[0] == pytest.approx(2 * math.log(2) - 1, rel=1e-14)
    assert phi_moments(-0.5)[0] == pytest.approx(0.6137056388801094, rel=1e-13)


def test_moments_against_quadrature():
    for d in [-0.999, -0.9, -0.5, -1e-3, -1e-7, 1e-9, 1e-4, 0.2, 0.25, 0.3, 1.0, 7.0, 1e3]:
        a_ref, _ = integrate.quad(lambda t: t * float(_phi_mp(d * t)), 0, 1, epsabs=1e-15, epsrel=1e-14)
        b_ref, _ = integrate.quad(lambda t: (t * float(_phi_mp(d * t))) ** 2, 0, 1, epsabs=1e-15, epsrel=1e-14)
        A, B = phi_moments(d)
        assert A == pytest.approx(a_ref, rel=1e-12)
        assert B == pytest.approx(b_ref, rel=1e-12)


def test_moment_derivatives_fd():
    for d in [-0.8, -0.2, -1e-4, 0.0, 1e-4, 0.24, 0.26, 3.0]:
        e = 1e-6 * max(1.0, abs(d))
        Ap, Am = phi_moments(d + e), phi_moments(d - e)
        dA, dB = phi_moments_prime(d)
        assert dA == pytest.approx((Ap[0] - Am[0]) / (2 * e), rel=1e-7, abs=1e-10)
        assert dB == pytest.approx((Ap[1] - Am[1]) / (2 * e), rel=1e-7, abs=1e-10)
