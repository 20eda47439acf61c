"""Special functions used by the prior fit and the t-test p-values.

Gamma-family functions and the regularized incomplete beta come from
``scipy.special``; the trigamma inverse is a Newton iteration on
``1 / trigamma``.
"""
from __future__ import annotations

import numpy as np
from scipy import special


def _positive(x, name="x"):
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise ValueError(f"{name} must be > 0")
    return x


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def digamma(x):
    return _out(special.digamma(_positive(x)))


def trigamma(x):
    return _out(special.polygamma(1, _positive(x)))


def log_gamma(x):
    return _out(special.gammaln(_positive(x)))


def trigamma_inverse(y, tol: float = 1e-8, max_iter: int = 50):
    """Solve ``trigamma(x) = y`` for x > 0.

    Newton's method on ``1/trigamma(x)``, which is nearly linear in x, started
    at ``0.5 + 1/y``. Very large or very small ``y`` use the leading asymptotic
    terms directly.
    """
    y = _positive(y, "y")
    scalar = y.ndim == 0
    y = np.atleast_1d(y)
    x = np.empty_like(y)
    big = y > 1e7
    small = y < 1e-6
    x[big] = 1.0 / np.sqrt(y[big])
    x[small] = 1.0 / y[small]
    mid = ~(big | small)
    xm = 0.5 + 1.0 / y[mid]
    ym = y[mid]
    for _ in range(max_iter):
        tri = special.polygamma(1, xm)
        step = tri * (1.0 - tri / ym) / special.polygamma(2, xm)
        xm = xm + step
        if xm.size == 0 or np.max(-step / xm) < tol:
            break
    x[mid] = xm
    return float(x[0]) if scalar else x


def student_sf2(t, df):
    """Two-sided tail ``P(|T| >= |t|)`` for Student's t with ``df`` dof."""
    df = _positive(df, "df")
    t = np.abs(np.asarray(t, dtype=float))
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.where(np.isinf(t), 0.0, df / (df + t * t))
    return _out(special.betainc(df / 2.0, 0.5, x))


def student_cdf(t, df):
    t = np.asarray(t, dtype=float)
    half = 0.5 * np.asarray(student_sf2(t, df))
    return _out(np.where(t >= 0, 1.0 - half, half))
