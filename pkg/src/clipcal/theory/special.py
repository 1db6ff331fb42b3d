"""Normal-family special functions used by the entropy engine.

erf/erfc come from scipy.special (double-precision rational approximations,
abs error well under 1e-10 over the real line). The upper tail Q(x) is
computed through erfc rather than 1 - Phi(x) so it keeps relative accuracy
far into the tail.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special as _sp

SQRT2 = math.sqrt(2.0)
SQRT_PI = math.sqrt(math.pi)
SQRT_2PI = math.sqrt(2.0 * math.pi)
# ln(sqrt(2*pi*e))
LOG_SQRT_2PI_E = 0.5 * math.log(2.0 * math.pi * math.e)


def erf(x):
    """Error function erf(x) = (2/sqrt(pi)) * int_0^x exp(-t^2) dt."""
    return _sp.erf(x)


def erfc(x):
    """Complementary error function 1 - erf(x), accurate in the tail."""
    return _sp.erfc(x)


def phi(x):
    """Standard normal density."""
    x = np.asarray(x, dtype=np.float64)
    out = np.exp(-0.5 * x * x) / SQRT_2PI
    return float(out) if out.ndim == 0 else out


def Phi(x):
    """Standard normal CDF, Phi(x) = (1 + erf(x / sqrt(2))) / 2."""
    return 0.5 * (1.0 + _sp.erf(np.asarray(x, dtype=np.float64) / SQRT2))


def normal_upper_tail(x):
    """Q(x) = 1 - Phi(x), via erfc to avoid cancellation for large x."""
    return 0.5 * _sp.erfc(np.asarray(x, dtype=np.float64) / SQRT2)
