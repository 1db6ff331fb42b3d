"""Adaptive Simpson quadrature.

Used as the numeric cross-check route for every closed-form entropy here:
smooth integrands, absolute tolerance 1e-10 by default, hard cap on the
number of interval subdivisions so a mis-specified integrand fails loudly
instead of spinning.
"""

from __future__ import annotations

from ..errors import NumericDegeneracyError

DEFAULT_TOL = 1e-10
MAX_SUBDIVISIONS = 1_000_000


def _simpson(f, a, fa, b, fb):
    m = 0.5 * (a + b)
    fm = f(m)
    return m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb)


def adaptive_simpson(f, a: float, b: float, tol: float = DEFAULT_TOL) -> float:
    """Integrate f over [a, b] to absolute tolerance tol."""
    if not a < b:
        raise NumericDegeneracyError(f"quadrature needs a < b, got [{a}, {b}]")
    fa, fb = f(a), f(b)
    m, fm, whole = _simpson(f, a, fa, b, fb)
    stack = [(a, fa, b, fb, m, fm, whole, tol)]
    total = 0.0
    used = 0
    while stack:
        a, fa, b, fb, m, fm, whole, tol = stack.pop()
        used += 1
        if used > MAX_SUBDIVISIONS:
            raise NumericDegeneracyError(
                f"adaptive Simpson exceeded {MAX_SUBDIVISIONS} subdivisions")
        lm, flm, left = _simpson(f, a, fa, m, fm)
        rm, frm, right = _simpson(f, m, fm, b, fb)
        err = left + right - whole
        if abs(err) <= 15.0 * tol:
            total += left + right + err / 15.0
        else:
            stack.append((a, fa, m, fm, lm, flm, left, tol / 2.0))
            stack.append((m, fm, b, fb, rm, frm, right, tol / 2.0))
    return total
