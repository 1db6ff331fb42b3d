"""Entropy analysis of clipped nonnegative features.

Two feature models are supported, both parameterized by the parent normal
scale sigma and the clip threshold c:

* ``half_normal``: the feature is |N(0, sigma^2)|. Clipping at c moves the
  upper tail onto a point mass at c; the entropy difference
  dH = H(clipped) - H(original) reduces to an erf closed form.
* ``rectified_mixture``: the feature is max(N(0, sigma^2), 0), i.e. an atom
  of mass q (default 0.5) at zero plus a truncated normal on (0, inf).
  Entropies of such discrete/continuous mixtures are the mixture-weight
  Shannon term plus the weighted component entropies; dH follows from the
  clipped and unclipped mixture entropies.

Differential and discrete entropy terms are combined exactly as stated above
(nats everywhere); the "entropy" of a mixed distribution is that weighted
combination, not a limit of discretizations.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

from ..errors import NumericDegeneracyError
from .special import LOG_SQRT_2PI_E, SQRT2, SQRT_2PI, SQRT_PI

MIN_TRUNC_MASS = 1e-15
MIN_SIGMA_FOR_DERIVATIVE = 1e-6


class FeatureModel(enum.Enum):
    HALF_NORMAL = "half_normal"
    RECTIFIED_MIXTURE = "rectified_mixture"


class DerivativeMethod(enum.Enum):
    CLOSED_FORM = "closed_form"
    FINITE_DIFFERENCE = "finite_difference"


@dataclass(frozen=True)
class TheoryParams:
    sigma: float
    c: float
    model: FeatureModel

    def __post_init__(self):
        if not self.sigma > 0:
            raise NumericDegeneracyError(f"sigma must be positive, got {self.sigma}")
        if not self.c > 0:
            raise NumericDegeneracyError(f"c must be positive, got {self.c}")


@dataclass(frozen=True)
class TheoryPoint:
    params: TheoryParams
    h_original: float
    h_clipped: float
    delta_h: float
    d_delta_h_d_sigma: float


class DegenerateClipWarning(RuntimeWarning):
    """Clip threshold so small that the continuous mass vanishes; the
    two-atom limit was returned."""


def _xlogx(v: float) -> float:
    return v * math.log(v) if v > 0.0 else 0.0


def _scalar_phi(x: float) -> float:
    return math.exp(-0.5 * x * x) / SQRT_2PI


def _scalar_Phi(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / SQRT2))


def _upper_tail(x: float) -> float:
    return 0.5 * math.erfc(x / SQRT2)


# ---------------------------------------------------------------------------
# Component entropies
# ---------------------------------------------------------------------------

def trunc_normal_pdf(x: float, sigma: float, a: float, b: float) -> float:
    """Density of a zero-mean normal with scale sigma truncated to (a, b)."""
    if x <= a or (b != math.inf and x >= b):
        return 0.0
    z = _truncation_mass(sigma, a, b)
    return _scalar_phi(x / sigma) / (sigma * z)


def _truncation_mass(sigma: float, a: float, b: float) -> float:
    hi = 1.0 if b == math.inf else _scalar_Phi(b / sigma)
    return hi - _scalar_Phi(a / sigma)


def trunc_normal_entropy(sigma: float, a: float, b: float) -> float:
    """Differential entropy (nats) of the normalized truncated normal:

        ln(sigma * sqrt(2*pi*e) * Z) + (alpha*phi(alpha) - beta*phi(beta)) / (2Z)

    with alpha = a/sigma, beta = b/sigma, Z = Phi(beta) - Phi(alpha). b may be
    +inf, in which case beta*phi(beta) -> 0.
    """
    if not sigma > 0:
        raise NumericDegeneracyError(f"sigma must be positive, got {sigma}")
    if not a < b:
        raise NumericDegeneracyError(f"truncation needs a < b, got ({a}, {b})")
    z = _truncation_mass(sigma, a, b)
    if z <= MIN_TRUNC_MASS:
        raise NumericDegeneracyError(
            f"truncation mass {z:.3e} vanishes for sigma={sigma}, interval=({a}, {b})")
    if a == -math.inf:
        apa = 0.0  # lim x*phi(x) = 0 at either infinity
    else:
        alpha = a / sigma
        apa = alpha * _scalar_phi(alpha)
    if b == math.inf:
        bpb = 0.0
    else:
        beta = b / sigma
        bpb = beta * _scalar_phi(beta)
    return math.log(sigma * z) + LOG_SQRT_2PI_E + (apa - bpb) / (2.0 * z)


def rectified_entropy(sigma: float, q: float = 0.5) -> float:
    """Entropy of the rectified feature: atom of mass q at 0 (entropy 0)
    plus mass 1-q of a (0, inf) truncated normal:

        -q ln q - (1-q) ln(1-q) + (1-q) * H_trunc(sigma, 0, inf)

    q = 0.5 corresponds to a zero-mean pre-activation; it is exposed for
    sensitivity checks only.
    """
    if not 0.0 < q < 1.0:
        raise NumericDegeneracyError(f"q must lie in (0, 1), got {q}")
    mix = -_xlogx(q) - _xlogx(1.0 - q)
    return mix + (1.0 - q) * trunc_normal_entropy(sigma, 0.0, math.inf)


def clipped_entropy(sigma: float, c: float, q: float = 0.5,
                    on_degenerate: str = "warn") -> float:
    """Entropy of the clipped rectified feature.

    Clipping at c turns the (c, inf) tail into a second atom, so the result
    mixes two atoms {0, c} with a (0, c) truncated normal. With p0 = q,
    p_c the clipped tail mass and qt = p0 + p_c:

        -qt ln qt - (1-qt) ln(1-qt)
        + qt * [-(p0/qt) ln(p0/qt) - (p_c/qt) ln(p_c/qt)]
        + (1-qt) * H_trunc(sigma, 0, c)

    When the continuous mass (1-qt) falls at or below 1e-15 (c tiny relative
    to sigma), the two-atom limit -p0 ln p0 - (1-p0) ln(1-p0) is returned and
    a DegenerateClipWarning is issued (or raised when on_degenerate="raise").
    """
    if not c > 0:
        raise NumericDegeneracyError(f"c must be positive, got {c}")
    if not 0.0 < q < 1.0:
        raise NumericDegeneracyError(f"q must lie in (0, 1), got {q}")
    t = c / sigma
    p0 = q
    # conditional tail/body masses of the (0, inf) component scale by 1/Phi(0)=2
    pc = 2.0 * (1.0 - q) * _upper_tail(t)
    cont = 2.0 * (1.0 - q) * (_scalar_Phi(t) - 0.5)
    if cont <= MIN_TRUNC_MASS:
        limit = -_xlogx(p0) - _xlogx(1.0 - p0)
        if on_degenerate == "raise":
            raise NumericDegeneracyError(
                f"continuous mass {cont:.3e} vanishes for sigma={sigma}, c={c}")
        warnings.warn(
            f"continuous mass {cont:.3e} vanishes for sigma={sigma}, c={c}; "
            f"returning the two-atom limit", DegenerateClipWarning, stacklevel=2)
        return limit
    qt = p0 + pc
    h_atoms = -_xlogx(p0 / qt) - _xlogx(pc / qt)
    return (-_xlogx(qt) - _xlogx(cont)
            + qt * h_atoms
            + cont * trunc_normal_entropy(sigma, 0.0, c))


def half_normal_entropy(sigma: float) -> float:
    """Differential entropy of |N(0, sigma^2)| (equals the (0, inf) truncated
    zero-mean normal's)."""
    return trunc_normal_entropy(sigma, 0.0, math.inf)


def half_normal_pdf(x: float, sigma: float) -> float:
    """Density sqrt(2)/(sigma*sqrt(pi)) * exp(-x^2 / (2 sigma^2)) for x > 0."""
    if x <= 0:
        return 0.0
    return SQRT2 / (sigma * SQRT_PI) * math.exp(-x * x / (2.0 * sigma * sigma))


# ---------------------------------------------------------------------------
# Entropy difference and its sigma-derivative
# ---------------------------------------------------------------------------

def _half_normal_delta_h(sigma: float, c: float) -> float:
    # dH = -P ln P + int_c^inf psi ln psi dx with P the clipped tail mass
    # erfc(a); evaluating the integral (a = c/(sigma*sqrt(2))) gives the
    # closed form below. The x^2-moment piece uses
    # int_a^inf u^2 e^{-u^2} du = a e^{-a^2}/2 + sqrt(pi)/4 * erfc(a).
    a = c / (sigma * SQRT2)
    e_tail = math.erfc(a)
    gauss = math.exp(-a * a)
    log_norm = math.log(2.0 * a / (c * SQRT_PI))  # = ln(sqrt(2)/(sigma*sqrt(pi)))
    return (-_xlogx(e_tail)
            + log_norm * e_tail
            - (a / SQRT_PI) * gauss
            - 0.5 * e_tail)


def _half_normal_delta_h_deriv(sigma: float, c: float) -> float:
    # d(dH)/d(sigma) = d(dH)/da * (-a / sigma), differentiating the closed
    # form above term by term.
    a = c / (sigma * SQRT2)
    e_tail = math.erfc(a)
    gauss = math.exp(-a * a)
    if e_tail <= 0.0 or gauss == 0.0:
        return 0.0
    log_norm = math.log(2.0 * a / (c * SQRT_PI))
    g = 2.0 / SQRT_PI * gauss
    d_da = (g * (math.log(e_tail) + 1.0 - log_norm)
            + e_tail / a
            + (2.0 * a * a / SQRT_PI) * gauss)
    return -(a / sigma) * d_da


def _rectified_delta_h(sigma: float, c: float) -> float:
    return clipped_entropy(sigma, c) - rectified_entropy(sigma)


def _rectified_delta_h_deriv_closed(sigma: float, c: float) -> float:
    # Closed-form expression for the rectified model, kept for cross-checking.
    # It is NOT the exact derivative of _rectified_delta_h: it drops the
    # mixture-weight coupling terms and normalizes the truncated component
    # over Phi(c/sigma) instead of Phi(c/sigma) - 1/2, which flips its sign
    # beyond the turning point of dH. Finite differences are authoritative;
    # compare_derivatives() quantifies the gap.
    t = c / sigma
    phi_t = _scalar_phi(t)
    cdf_t = _scalar_Phi(t)
    body = cdf_t - 0.5
    tail = _upper_tail(t)
    if phi_t == 0.0 or tail <= 0.0 or body <= 0.0:
        return 5.0 / (4.0 * sigma)
    term1 = math.log(body / tail) * phi_t * c / sigma**2
    term2 = 5.0 / (4.0 * sigma)
    term3 = -c * phi_t / (2.0 * sigma**2 * cdf_t)
    term4 = (-phi_t / (2.0 * cdf_t**2)
             * (c * (c * c - sigma * sigma) / sigma**4 * cdf_t
                + c * c / sigma**3 * phi_t))
    return term1 + term2 + term3 + term4


def delta_h(params: TheoryParams) -> float:
    """Entropy difference H(clipped) - H(original) for the given model."""
    if params.model is FeatureModel.HALF_NORMAL:
        return _half_normal_delta_h(params.sigma, params.c)
    return _rectified_delta_h(params.sigma, params.c)


def d_delta_h_d_sigma(params: TheoryParams,
                      method: DerivativeMethod = DerivativeMethod.FINITE_DIFFERENCE
                      ) -> float:
    """Derivative of delta_h with respect to sigma.

    FINITE_DIFFERENCE (Richardson-extrapolated central differences with
    h = 1e-4 * sigma) differentiates this module's own delta_h and is the
    canonical route for both models. CLOSED_FORM is exact for the
    half-normal model; for the rectified model it is an approximate
    expression retained only for gap reporting (see
    _rectified_delta_h_deriv_closed).
    """
    if params.sigma < MIN_SIGMA_FOR_DERIVATIVE:
        raise NumericDegeneracyError(
            f"sigma={params.sigma} too close to 0 for a derivative")
    if method is DerivativeMethod.CLOSED_FORM:
        if params.model is FeatureModel.HALF_NORMAL:
            return _half_normal_delta_h_deriv(params.sigma, params.c)
        return _rectified_delta_h_deriv_closed(params.sigma, params.c)
    f = (_half_normal_delta_h if params.model is FeatureModel.HALF_NORMAL
         else _rectified_delta_h)
    sigma, c = params.sigma, params.c
    h = 1e-4 * sigma

    def central(step):
        return (f(sigma + step, c) - f(sigma - step, c)) / (2.0 * step)

    d_h = central(h)
    d_h2 = central(0.5 * h)
    return (4.0 * d_h2 - d_h) / 3.0


def theory_point(params: TheoryParams) -> TheoryPoint:
    """Evaluate entropies, delta_h, and the FD derivative at one grid point."""
    if params.model is FeatureModel.HALF_NORMAL:
        h0 = half_normal_entropy(params.sigma)
        d = _half_normal_delta_h(params.sigma, params.c)
        h1 = h0 + d
    else:
        h0 = rectified_entropy(params.sigma)
        h1 = clipped_entropy(params.sigma, params.c)
        d = h1 - h0
    return TheoryPoint(params=params, h_original=h0, h_clipped=h1, delta_h=d,
                       d_delta_h_d_sigma=d_delta_h_d_sigma(params))
