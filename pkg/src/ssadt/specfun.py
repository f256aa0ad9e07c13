"""Scalar special functions used throughout the package.

Every function accepts a float or a numpy array and returns the same kind.
``digamma`` and ``trigamma`` use an upward recurrence shift to x >= 8 followed
by the Bernoulli asymptotic series, which keeps the absolute error uniform for
the very small gamma shapes (f * alpha of order 1e-3..1) met in planning.
The normal distribution functions wrap the erfc-based Cephes routines from
scipy so that far-tail probabilities keep full relative precision.
"""

import math

import numpy as np
from scipy import special

from .errors import DomainError

_SHIFT_TO = 8.0
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

# B_2k / (2k) for the digamma series, k = 1..7
_DIGAMMA_COEF = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)
# B_2k for the trigamma series, k = 1..7
_TRIGAMMA_COEF = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
)


def _as_positive(x, name):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
        raise DomainError(f"{name} requires finite x > 0")
    return arr


def _out(arr, like):
    return float(arr) if np.ndim(like) == 0 else arr


def log_gamma(x):
    """ln Gamma(x) for x > 0."""
    arr = _as_positive(x, "log_gamma")
    return _out(special.gammaln(arr), x)


def _shift(arr, power):
    """Shift arr upward to >= 8, accumulating sum of 1/(x+i)**power."""
    x = np.array(arr, dtype=float, copy=True)
    acc = np.zeros_like(x)
    for _ in range(int(_SHIFT_TO)):
        small = x < _SHIFT_TO
        if not np.any(small):
            break
        acc = np.where(small, acc + 1.0 / np.where(small, x, 1.0) ** power, acc)
        x = np.where(small, x + 1.0, x)
    return x, acc


def digamma(x):
    """psi_0(x) = d/dx ln Gamma(x) for x > 0."""
    arr = _as_positive(x, "digamma")
    z, acc = _shift(arr, 1)
    inv2 = 1.0 / (z * z)
    series = 0.0
    for c in reversed(_DIGAMMA_COEF):
        series = series * inv2 + c
    res = np.log(z) - 0.5 / z - inv2 * series - acc
    return _out(res, x)


def trigamma(x):
    """psi_1(x) = d^2/dx^2 ln Gamma(x) for x > 0; always positive."""
    arr = _as_positive(x, "trigamma")
    z, acc = _shift(arr, 2)
    inv2 = 1.0 / (z * z)
    series = 0.0
    for c in reversed(_TRIGAMMA_COEF):
        series = series * inv2 + c
    res = 1.0 / z + 0.5 * inv2 + inv2 / z * series + acc
    return _out(res, x)


def norm_cdf(z):
    """Standard normal cdf Phi(z)."""
    return _out(special.ndtr(np.asarray(z, dtype=float)), z)


def norm_sf(z):
    """Standard normal survival 1 - Phi(z), accurate in the upper tail."""
    return _out(special.ndtr(-np.asarray(z, dtype=float)), z)


def norm_logsf(z):
    """log(1 - Phi(z)) without cancellation for large z."""
    return _out(special.log_ndtr(-np.asarray(z, dtype=float)), z)


def norm_pdf(z):
    """Standard normal density phi(z)."""
    arr = np.asarray(z, dtype=float)
    return _out(_INV_SQRT_2PI * np.exp(-0.5 * arr * arr), z)


def norm_quantile(p):
    """Inverse of Phi on the open interval (0, 1)."""
    arr = np.asarray(p, dtype=float)
    if not np.all((arr > 0.0) & (arr < 1.0)):
        raise DomainError("norm_quantile requires 0 < p < 1")
    return _out(special.ndtri(arr), p)
