"""The function Phi(eta) = log(1 + eta) / eta and its two weighted moments.

For a cell on which the reciprocal quantile slope ``h`` is affine and moves
from ``h0`` to ``h0 * (1 + delta)``, the quantile increment on the cell is
``du / h0 * Phi(delta)``, and the squared-error integrals of the cell need

    A(delta) = int_0^1 t Phi(delta t) dt
             = ((1 + delta) log(1 + delta) - delta) / delta**2
    B(delta) = int_0^1 t**2 Phi(delta t)**2 dt
             = ((1 + delta) L**2 - 2 (1 + delta) L + 2 delta) / delta**3,

with ``L = log(1 + delta)``.  The closed forms cancel catastrophically near
zero, so for ``|delta| < SERIES_CUTOFF`` a Maclaurin series is used instead.
"""

from __future__ import annotations

import numpy as np
from numpy.polynomial import polynomial as npoly

SERIES_CUTOFF = 0.25
_N_TERMS = 36  # 0.25**36 ~ 2e-22

_k = np.arange(_N_TERMS, dtype=float)
_sign = (-1.0) ** _k
_PHI_COEF = _sign / (_k + 1.0)
_A_COEF = _sign / ((_k + 1.0) * (_k + 2.0))
# Phi(x)**2 = sum_k (-1)^k 2 H_{k+1} / (k + 2) x^k
_harmonic = np.cumsum(1.0 / np.arange(1, _N_TERMS + 2))
_PHI2_COEF = _sign * 2.0 * _harmonic[:_N_TERMS] / (_k + 2.0)
_B_COEF = _PHI2_COEF / (_k + 3.0)


def _deriv(coef):
    return npoly.polyder(coef)


_PHI_DCOEF = _deriv(_PHI_COEF)
_A_DCOEF = _deriv(_A_COEF)
_B_DCOEF = _deriv(_B_COEF)
_PHI_D2COEF = _deriv(_PHI_DCOEF)
_A_D2COEF = _deriv(_A_DCOEF)
_B_D2COEF = _deriv(_B_DCOEF)


_BUCKETS = (1e-3, 1e-2, 5e-2, SERIES_CUTOFF)


def _series(x, coef):
    """Horner evaluation with the series cut where the tail drops below 1e-18.

    Points are grouped by magnitude so that the many tiny arguments of a fine
    grid do not pay for the terms needed near the cutoff.
    """
    out = np.empty_like(x)
    ax = np.abs(x)
    lo = 0.0
    for hi in _BUCKETS:
        sel = (ax >= lo) & (ax < hi)
        lo = hi
        if not np.any(sel):
            continue
        # |x|^n * n^2 < 1e-18 for n <= 36 (n^2 bounds the derivative growth)
        n = min(coef.size, int(np.ceil(48.4 / -np.log(hi))) + 1)
        out[sel] = npoly.polyval(x[sel], coef[:n])
    return out


def _check_domain(x):
    x = np.asarray(x, dtype=float)
    if np.any(~(x > -1.0)):
        raise ValueError("argument must be > -1 (and not NaN)")
    return x


def _piecewise(x, series, closed):
    """Evaluate ``series`` on |x| < cutoff and ``closed`` elsewhere."""
    small = np.abs(x) < SERIES_CUTOFF
    out = np.empty_like(x)
    if np.any(small):
        out[small] = series(x[small])
    big = ~small
    if np.any(big):
        out[big] = closed(x[big])
    return out


def _scalar_or_array(x_in, out):
    return float(np.reshape(out, -1)[0]) if np.ndim(x_in) == 0 else out


def phi(eta):
    """Phi(eta) = log(1 + eta) / eta, continuously extended by Phi(0) = 1.

    Convex, positive and decreasing on (-1, inf).

    Raises
    ------
    ValueError
        If any ``eta <= -1``.
    """
    x = np.atleast_1d(_check_domain(eta))
    out = _piecewise(
        x,
        lambda s: _series(s, _PHI_COEF),
        lambda s: np.log1p(s) / s,
    )
    return _scalar_or_array(eta, out)


def phi_prime(eta):
    """Derivative of :func:`phi`."""
    x = np.atleast_1d(_check_domain(eta))

    def closed(s):
        return (s / (1.0 + s) - np.log1p(s)) / (s * s)

    out = _piecewise(x, lambda s: _series(s, _PHI_DCOEF), closed)
    return _scalar_or_array(eta, out)


def _a_closed(d):
    L = np.log1p(d)
    return ((1.0 + d) * L - d) / (d * d)


def _b_closed(d):
    L = np.log1p(d)
    return ((1.0 + d) * L * L - 2.0 * (1.0 + d) * L + 2.0 * d) / (d * d * d)


def phi_moments(delta):
    """Return ``(A, B)``, the first and second weighted moments of Phi.

    ``A(delta) = int_0^1 t Phi(delta t) dt`` and
    ``B(delta) = int_0^1 t**2 Phi(delta t)**2 dt``.

    Examples
    --------
    >>> phi_moments(0.0)
    (0.5, 0.3333333333333333)
    """
    d = np.atleast_1d(_check_domain(delta))
    A = _piecewise(d, lambda s: _series(s, _A_COEF), _a_closed)
    B = _piecewise(d, lambda s: _series(s, _B_COEF), _b_closed)
    if np.ndim(delta) == 0:
        return float(A[0]), float(B[0])
    return A, B


def phi_moments_prime(delta):
    """Derivatives ``(A'(delta), B'(delta))`` of :func:`phi_moments`."""
    d = np.atleast_1d(_check_domain(delta))

    def a_prime(s):
        L = np.log1p(s)
        return (2.0 * s - (2.0 + s) * L) / s**3

    def b_prime(s):
        L = np.log1p(s)
        return (L * L - 3.0 * s * s * _b_closed(s)) / s**3

    dA = _piecewise(d, lambda s: _series(s, _A_DCOEF), a_prime)
    dB = _piecewise(d, lambda s: _series(s, _B_DCOEF), b_prime)
    if np.ndim(delta) == 0:
        return float(dA[0]), float(dB[0])
    return dA, dB


def phi_second(eta):
    """Second derivative of :func:`phi`."""
    x = np.atleast_1d(_check_domain(eta))

    def closed(s):
        L = np.log1p(s)
        return (2.0 * L * (1.0 + s) ** 2 - s * (3.0 * s + 2.0)) / (s**3 * (1.0 + s) ** 2)

    out = _piecewise(x, lambda s: _series(s, _PHI_D2COEF), closed)
    return _scalar_or_array(eta, out)


def phi_moments_second(delta):
    """Second derivatives ``(A''(delta), B''(delta))``."""
    d = np.atleast_1d(_check_domain(delta))

    def a_second(s):
        L = np.log1p(s)
        return (2.0 * L * (s + 1.0) * (s + 3.0) - s * (5.0 * s + 6.0)) / (s**4 * (1.0 + s))

    def b_second(s):
        L = np.log1p(s)
        num = (
            3.0 * L * L * (s + 1.0) * (s + 2.0)
            - L * (11.0 * s * s + 24.0 * s + 12.0)
            + 12.0 * s * (s + 1.0)
        )
        return 2.0 * num / (s**5 * (1.0 + s))

    d2A = _piecewise(d, lambda s: _series(s, _A_D2COEF), a_second)
    d2B = _piecewise(d, lambda s: _series(s, _B_D2COEF), b_second)
    if np.ndim(delta) == 0:
        return float(d2A[0]), float(d2B[0])
    return d2A, d2B
