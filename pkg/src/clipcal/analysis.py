"""HCE/LCE sample diagnostics.

High-calibration-error (HCE) samples are wrongly predicted with confidence
above a threshold tau; low-calibration-error (LCE) samples are correctly
predicted above the same threshold. Both predicates are evaluated on the
vanilla (uncalibrated) probabilities with strict inequality, matching the
group definitions used throughout the reports. All entropies are in nats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import metrics
from .calibrators import clip_features
from .datastore import Dataset, SplitMix64, canonical_logits, compute_logits
from .errors import DataError, MissingHeadError, NumericDegeneracyError


@dataclass(frozen=True)
class GroupSelection:
    tau: float
    hce_idx: np.ndarray  # wrong and confidence > tau
    lce_idx: np.ndarray  # correct and confidence > tau

    @property
    def hce_empty(self) -> bool:
        return self.hce_idx.size == 0

    @property
    def lce_empty(self) -> bool:
        return self.lce_idx.size == 0


def select_groups(probs: np.ndarray, labels: np.ndarray, tau: float = 0.95
                  ) -> GroupSelection:
    """Split samples into HCE/LCE groups by the strict confidence threshold.

    Empty groups are permitted; callers can check hce_empty/lce_empty.
    """
    if not 0.0 < tau < 1.0:
        raise DataError(f"tau must lie in (0, 1), got {tau}")
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    conf, pred = metrics.confidences(probs)
    high = conf > tau
    correct = pred == labels
    hce = np.flatnonzero(high & ~correct)
    lce = np.flatnonzero(high & correct)
    return GroupSelection(tau=tau, hce_idx=hce, lce_idx=lce)


def unit_mean_profile(features: np.ndarray, selection: GroupSelection,
                      unit_subset="all", seed: int = 0,
                      absolute: bool = False) -> dict:
    """Columnwise feature means per group over a unit subset.

    unit_subset is "all" or an integer count of units drawn (without
    replacement) by the deterministic SplitMix64 shuffle of the seed, so the
    same seed reproduces the same profile. ``absolute`` averages |x| instead
    of x, which is the useful view for signed (transformer) features.
    """
    features = np.asarray(features, dtype=np.float64)
    if selection.hce_empty or selection.lce_empty:
        raise DataError("unit_mean_profile needs both groups non-empty")
    d = features.shape[1]
    if unit_subset == "all":
        units = np.arange(d, dtype=np.int64)
    else:
        count = int(unit_subset)
        if not 0 < count <= d:
            raise DataError(f"unit subset size {count} outside [1, {d}]")
        units = np.sort(_shuffled_units(d, seed)[:count])
    vals = np.abs(features) if absolute else features
    return {
        "units": units,
        "mean_hce": vals[selection.hce_idx][:, units].mean(axis=0),
        "mean_lce": vals[selection.lce_idx][:, units].mean(axis=0),
    }


def _shuffled_units(d: int, seed: int) -> np.ndarray:
    rng = SplitMix64(seed)
    units = list(range(d))
    for i in range(d - 1, 0, -1):
        j = rng.below(i + 1)
        units[i], units[j] = units[j], units[i]
    return np.asarray(units, dtype=np.int64)


def profile_to_csv(profile: dict) -> str:
    lines = ["unit,mean_hce,mean_lce"]
    for unit, mh, ml in zip(profile["units"], profile["mean_hce"], profile["mean_lce"]):
        lines.append(f"{int(unit)},{mh!r},{ml!r}")
    return "\n".join(lines) + "\n"


def feature_histogram(features: np.ndarray, selection: GroupSelection,
                      bins: int = 50) -> dict:
    """Shared-edge histograms of feature values for the two groups.

    Edges span [0, max feature value across both groups]; densities are
    normalized so each group's histogram integrates to 1.
    """
    if bins < 1:
        raise DataError(f"bins must be >= 1, got {bins}")
    if selection.hce_empty or selection.lce_empty:
        raise DataError("feature_histogram needs both groups non-empty")
    features = np.asarray(features, dtype=np.float64)
    hce_vals = features[selection.hce_idx].ravel()
    lce_vals = features[selection.lce_idx].ravel()
    top = max(hce_vals.max(), lce_vals.max())
    if top <= 0:
        raise NumericDegeneracyError("all feature values are zero or negative")
    edges = np.linspace(0.0, top, bins + 1)
    dens_hce, _ = np.histogram(hce_vals, bins=edges, density=True)
    dens_lce, _ = np.histogram(lce_vals, bins=edges, density=True)
    return {"edges": edges, "density_hce": dens_hce, "density_lce": dens_lce}


def histogram_to_csv(hist: dict) -> str:
    lines = ["bin_lo,bin_hi,density_hce,density_lce"]
    edges = hist["edges"]
    for i in range(len(edges) - 1):
        lines.append(f"{edges[i]!r},{edges[i + 1]!r},"
                     f"{hist['density_hce'][i]!r},{hist['density_lce'][i]!r}")
    return "\n".join(lines) + "\n"


def estimate_sigma(features: np.ndarray, group_idx: np.ndarray,
                   include_zeros: bool = False) -> float:
    """Half-normal ML scale over the group's pooled feature entries:
    sigma_hat = sqrt(mean of squares).

    Exact zeros are excluded by default: under the rectified model they
    belong to the atom, not the half-normal body, and the estimate targets
    the parent sigma. include_zeros=True keeps them for sensitivity checks.
    """
    features = np.asarray(features, dtype=np.float64)
    vals = features[np.asarray(group_idx)].ravel()
    vals = vals[vals >= 0] if include_zeros else vals[vals > 0]
    if vals.size == 0 or not np.any(vals > 0):
        raise NumericDegeneracyError("group has no strictly positive feature entries")
    return float(math.sqrt(np.mean(vals * vals)))


def entropy_table(ds: Dataset, selection: GroupSelection, c: float) -> dict:
    """Mean softmax entropy per group before/after clipping features at c."""
    if not ds.has_head:
        raise MissingHeadError("entropy_table needs head weights/bias")
    if selection.hce_empty or selection.lce_empty:
        raise DataError("entropy_table needs both groups non-empty")
    out = {"log_base": "e"}
    clipped = clip_features(ds.features, c)
    for name, idx in (("hce", selection.hce_idx), ("lce", selection.lce_idx)):
        before = metrics.mean_entropy(metrics.softmax(canonical_logits(ds, idx)))
        after = metrics.mean_entropy(
            metrics.softmax(compute_logits(ds, clipped[idx])))
        out[name] = {"h_before": before, "h_after": after,
                     "delta": after - before}
    return out


DEFAULT_THRESHOLDS = (0.80, 0.90, 0.95, 0.99)


def overconfidence_counts(probs: np.ndarray, labels: np.ndarray,
                          thresholds=DEFAULT_THRESHOLDS) -> list[dict]:
    """Counts of correct/wrong predictions with confidence strictly above
    each threshold."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    for t in thresholds:
        if not 0.0 < t < 1.0:
            raise DataError(f"threshold {t} outside (0, 1)")
    conf, pred = metrics.confidences(probs)
    correct = pred == labels
    rows = []
    for t in sorted(thresholds):
        mask = conf > t
        rows.append({
            "threshold": float(t),
            "correct": int(np.count_nonzero(mask & correct)),
            "wrong": int(np.count_nonzero(mask & ~correct)),
        })
    return rows


def counts_to_csv(rows: list[dict]) -> str:
    lines = ["threshold,correct,wrong"]
    for r in rows:
        lines.append(f"{r['threshold']!r},{r['correct']},{r['wrong']}")
    return "\n".join(lines) + "\n"
