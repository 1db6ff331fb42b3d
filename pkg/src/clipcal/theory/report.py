"""Curve emission, derivative comparison reports, and monotonicity scans."""

from __future__ import annotations

from ..errors import NumericDegeneracyError
from .entropy import (
    DerivativeMethod,
    FeatureModel,
    TheoryParams,
    d_delta_h_d_sigma,
    delta_h,
)


def emit_theory_curves(model: FeatureModel, c_values, sigma_grid) -> list[dict]:
    """Rows (model, c, sigma, delta_h, d_delta_h_d_sigma), c-major order.

    Derivatives use the finite-difference route.
    """
    if not len(c_values) or not len(sigma_grid):
        raise NumericDegeneracyError("c_values and sigma_grid must be non-empty")
    rows = []
    for c in c_values:
        for sigma in sigma_grid:
            params = TheoryParams(sigma=float(sigma), c=float(c), model=model)
            rows.append({
                "model": model.value,
                "c": float(c),
                "sigma": float(sigma),
                "delta_h": delta_h(params),
                "d_delta_h_d_sigma": d_delta_h_d_sigma(params),
            })
    return rows


def curves_to_csv(rows: list[dict]) -> str:
    lines = ["model,c,sigma,delta_h,d_delta_h_d_sigma"]
    for r in rows:
        lines.append(f"{r['model']},{r['c']!r},{r['sigma']!r},"
                     f"{r['delta_h']!r},{r['d_delta_h_d_sigma']!r}")
    return "\n".join(lines) + "\n"


def compare_derivatives(model: FeatureModel, c_values, sigma_grid) -> dict:
    """Closed-form vs finite-difference derivative over a grid.

    Reports per-point values, the max abs discrepancy, and every point where
    the two routes disagree in sign (values within atol of zero are treated
    as sign-agnostic).
    """
    atol = 1e-9
    points = []
    max_diff = 0.0
    sign_disagreements = []
    for c in c_values:
        for sigma in sigma_grid:
            params = TheoryParams(sigma=float(sigma), c=float(c), model=model)
            cf = d_delta_h_d_sigma(params, DerivativeMethod.CLOSED_FORM)
            fd = d_delta_h_d_sigma(params, DerivativeMethod.FINITE_DIFFERENCE)
            diff = abs(cf - fd)
            max_diff = max(max_diff, diff)
            entry = {"c": float(c), "sigma": float(sigma),
                     "closed_form": cf, "finite_difference": fd,
                     "abs_diff": diff}
            points.append(entry)
            if abs(cf) > atol and abs(fd) > atol and (cf > 0) != (fd > 0):
                sign_disagreements.append(entry)
    return {
        "model": model.value,
        "points": points,
        "max_abs_diff": max_diff,
        "sign_disagreements": sign_disagreements,
    }


def scan_monotonicity(model: FeatureModel, c: float, sigma_grid) -> dict:
    """Check delta_h(sigma) for strict increase along the grid.

    ``sigma_star`` is the location of the first adjacent decrease (the
    empirical turning point); delta_h keeps increasing only below it.
    Adjacent ties are counted separately: when sigma << c the true delta_h
    underflows float64 (it is around exp(-(c/sigma)^2/2)), so consecutive
    grid values can both evaluate to 0.0 without the math being flat there.
    """
    values = [delta_h(TheoryParams(sigma=float(s), c=float(c), model=model))
              for s in sigma_grid]
    first_decrease = None
    decreases = 0
    ties = 0
    for i in range(len(values) - 1):
        if values[i + 1] < values[i]:
            decreases += 1
            if first_decrease is None:
                first_decrease = float(sigma_grid[i])
        elif values[i + 1] == values[i]:
            ties += 1
    return {
        "model": model.value,
        "c": float(c),
        "strictly_increasing": decreases == 0 and ties == 0,
        "sigma_star": first_decrease,
        "decreases": decreases,
        "ties": ties,
        "n_points": len(values),
    }


def scan_derivative_sign(model: FeatureModel, c: float, sigma_grid,
                         atol: float = 1e-9) -> dict:
    """Check d(delta_h)/d(sigma) > 0 (finite differences) along the grid.

    ``sigma_star`` is the first resolvably negative point (d < -atol).
    Points with |d| <= atol are counted as indeterminate rather than as sign
    changes: central differences with h = 1e-4*sigma carry rounding noise of
    order eps/h ~ 1e-11, and for sigma << c delta_h underflows outright.
    """
    first_negative = None
    n_negative = 0
    n_indeterminate = 0
    n_points = 0
    for s in sigma_grid:
        n_points += 1
        params = TheoryParams(sigma=float(s), c=float(c), model=model)
        d = d_delta_h_d_sigma(params)
        if d < -atol:
            n_negative += 1
            if first_negative is None:
                first_negative = float(s)
        elif abs(d) <= atol:
            n_indeterminate += 1
    return {
        "model": model.value,
        "c": float(c),
        "all_positive": n_negative == 0 and n_indeterminate == 0,
        "sigma_star": first_negative,
        "n_negative": n_negative,
        "n_indeterminate": n_indeterminate,
        "n_points": n_points,
        "atol": atol,
    }
