"""Calibration and accuracy metrics over probability matrices.

Conventions shared by every function here:

* probability matrices are (n, k) float64 arrays whose rows sum to 1;
* confidence is the row max, the prediction its argmax (ties broken toward
  the lowest class index);
* all quantities live in [0, 1] fractions and nats; callers that want the
  percentage convention multiply by 100 at the presentation layer;
* summations run in input order so results are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

DEFAULT_BINS = 15
NLL_FLOOR = 1e-300
ROW_SUM_TOL = 1e-9


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise max-shifted softmax. Rejects NaN/Inf input."""
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise DataError("softmax: logits contain NaN or Inf")
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def validate_probs(probs: np.ndarray) -> np.ndarray:
    """Check the row-stochastic contract (rows sum to 1 within 1e-9)."""
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] == 0:
        raise DataError("probability matrix must be non-empty and 2-d")
    if p.min() < -ROW_SUM_TOL or p.max() > 1 + ROW_SUM_TOL:
        raise DataError("probability entries outside [0, 1]")
    if np.max(np.abs(p.sum(axis=1) - 1.0)) > ROW_SUM_TOL:
        raise DataError("probability rows do not sum to 1 within 1e-9")
    return p


def confidences(probs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(confidence, prediction) per row; argmax ties go to the lowest index."""
    probs = np.asarray(probs)
    pred = probs.argmax(axis=1)
    return probs[np.arange(len(probs)), pred], pred


@dataclass
class ReliabilityBins:
    """Per-bin reliability records for diagram plotting.

    ``lo``/``hi`` are the bin edges (equal-width mode partitions [0, 1]; the
    adaptive mode reports each bin's min/max confidence). ``gap`` is
    accuracy - avg_confidence.
    """

    lo: np.ndarray
    hi: np.ndarray
    count: np.ndarray
    avg_conf: np.ndarray
    accuracy: np.ndarray
    gap: np.ndarray = field(init=False)

    def __post_init__(self):
        self.gap = self.accuracy - self.avg_conf

    @property
    def bins(self) -> int:
        return len(self.count)

    def to_csv(self) -> str:
        lines = ["bin_lo,bin_hi,count,avg_conf,accuracy,gap"]
        for m in range(self.bins):
            lines.append(
                f"{self.lo[m]!r},{self.hi[m]!r},{int(self.count[m])},"
                f"{self.avg_conf[m]!r},{self.accuracy[m]!r},{self.gap[m]!r}")
        return "\n".join(lines) + "\n"


def _equal_width_bin_index(conf: np.ndarray, bins: int) -> np.ndarray:
    # bins [(m-1)/M, m/M) with the last bin closed at 1.0 so confidence
    # exactly 1.0 (common after clipping) is still binned
    idx = np.floor(conf * bins).astype(np.int64)
    return np.clip(idx, 0, bins - 1)


def _binned_gap_sum(values: np.ndarray, correct: np.ndarray, bins: int,
                    n_total: int) -> tuple[float, ReliabilityBins]:
    """Sum over equal-width bins of (|B_m|/n_total)*|A_m - C_m|.

    np.bincount accumulates in input order, which keeps the result
    reproducible against a straight per-sample loop.
    """
    idx = _equal_width_bin_index(values, bins)
    count = np.bincount(idx, minlength=bins)
    val_sum = np.bincount(idx, weights=values, minlength=bins)
    cor_sum = np.bincount(idx, weights=correct.astype(np.float64), minlength=bins)
    nonzero = count > 0
    avg = np.zeros(bins)
    acc = np.zeros(bins)
    avg[nonzero] = val_sum[nonzero] / count[nonzero]
    acc[nonzero] = cor_sum[nonzero] / count[nonzero]
    total = 0.0
    for m in range(bins):
        if count[m]:
            total += (count[m] / n_total) * abs(acc[m] - avg[m])
    edges = np.linspace(0.0, 1.0, bins + 1)
    rb = ReliabilityBins(lo=edges[:-1], hi=edges[1:], count=count,
                         avg_conf=avg, accuracy=acc)
    return total, rb


def _check_inputs(probs, labels, bins):
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    if probs.ndim != 2 or len(probs) == 0:
        raise DataError("empty probability matrix")
    if len(labels) != len(probs):
        raise DataError("labels length does not match probability rows")
    if bins < 1:
        raise DataError(f"bin count must be >= 1, got {bins}")
    return probs, labels


def ece_equal_width(probs, labels, bins: int = DEFAULT_BINS) -> tuple[float, ReliabilityBins]:
    """Expected calibration error with M equal-width confidence bins."""
    probs, labels = _check_inputs(probs, labels, bins)
    conf, pred = confidences(probs)
    return _binned_gap_sum(conf, pred == labels, bins, len(probs))


def ece_adaptive(probs, labels, bins: int = DEFAULT_BINS) -> tuple[float, ReliabilityBins]:
    """Equal-mass ECE: sort by confidence (stable, ties by original index);
    the first (n mod M) bins take ceil(n/M) samples, the rest floor(n/M)."""
    probs, labels = _check_inputs(probs, labels, bins)
    n = len(probs)
    if bins > n:
        raise DataError(f"adaptive ECE needs bins <= n ({bins} > {n})")
    conf, pred = confidences(probs)
    correct = (pred == labels).astype(np.float64)
    order = np.argsort(conf, kind="stable")
    conf_s, corr_s = conf[order], correct[order]
    q, r = divmod(n, bins)
    sizes = [q + 1] * r + [q] * (bins - r)
    lo = np.zeros(bins)
    hi = np.zeros(bins)
    count = np.zeros(bins, dtype=np.int64)
    avg = np.zeros(bins)
    acc = np.zeros(bins)
    total = 0.0
    start = 0
    for m, size in enumerate(sizes):
        stop = start + size
        chunk_c = conf_s[start:stop]
        chunk_a = corr_s[start:stop]
        count[m] = size
        lo[m], hi[m] = chunk_c[0], chunk_c[-1]
        avg[m] = chunk_c.mean()
        acc[m] = chunk_a.mean()
        total += (size / n) * abs(acc[m] - avg[m])
        start = stop
    return total, ReliabilityBins(lo=lo, hi=hi, count=count, avg_conf=avg, accuracy=acc)


def ece_classwise(probs, labels, bins: int = DEFAULT_BINS) -> float:
    """Classwise ECE: equal-width-bin each class's probability column against
    the indicator y == k, sum the binned gaps (global-n divisor), and average
    over the K classes."""
    probs, labels = _check_inputs(probs, labels, bins)
    n, k = probs.shape
    if k < 2:
        raise DataError("classwise ECE needs k >= 2")
    total = 0.0
    for cls in range(k):
        gap, _ = _binned_gap_sum(probs[:, cls], labels == cls, bins, n)
        total += gap
    return total / k


def nll(probs, labels) -> float:
    """Mean negative log likelihood (natural log) of the true class."""
    value, _ = nll_with_floor_count(probs, labels)
    return value


def nll_with_floor_count(probs, labels) -> tuple[float, int]:
    """NLL plus the number of true-class probabilities floored at 1e-300."""
    probs, labels = _check_inputs(probs, labels, 1)
    p_true = probs[np.arange(len(probs)), labels]
    floored = int(np.count_nonzero(p_true < NLL_FLOOR))
    return float(-np.mean(np.log(np.maximum(p_true, NLL_FLOOR)))), floored


def accuracy(probs, labels) -> float:
    probs, labels = _check_inputs(probs, labels, 1)
    _, pred = confidences(probs)
    return float(np.mean(pred == labels))


def brier(probs, labels) -> float:
    """Multiclass Brier score: mean over samples of sum_k (p_k - 1{y=k})^2."""
    probs, labels = _check_inputs(probs, labels, 1)
    onehot = np.zeros_like(probs)
    onehot[np.arange(len(probs)), labels] = 1.0
    return float(np.mean(np.sum((probs - onehot) ** 2, axis=1)))


def mean_entropy(probs) -> float:
    """Mean Shannon entropy of the rows in nats, with 0*ln(0) := 0."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or len(probs) == 0:
        raise DataError("empty probability matrix")
    plogp = np.where(probs > 0, probs * np.log(np.where(probs > 0, probs, 1.0)), 0.0)
    return float(np.mean(-plogp.sum(axis=1)))


@dataclass
class MetricReport:
    """All calibration metrics for one evaluated probability matrix.

    Values are [0, 1] fractions / nats; ``scale`` in the serialized form marks
    that convention explicitly.
    """

    ece: float
    adaptive_ece: float
    classwise_ece: float
    nll: float
    brier: float
    accuracy: float
    mean_entropy: float
    bins: ReliabilityBins
    nll_floored: int = 0

    def to_dict(self) -> dict:
        return {
            "scale": "fraction",
            "ece": self.ece,
            "adaptive_ece": self.adaptive_ece,
            "classwise_ece": self.classwise_ece,
            "nll": self.nll,
            "brier": self.brier,
            "accuracy": self.accuracy,
            "mean_entropy": self.mean_entropy,
            "nll_floored": self.nll_floored,
            "bin_count": self.bins.bins,
        }


def evaluate(probs, labels, bins: int = DEFAULT_BINS) -> MetricReport:
    """Compute the full metric suite; reliability bins use equal-width mode."""
    ece, rb = ece_equal_width(probs, labels, bins)
    ada, _ = ece_adaptive(probs, labels, min(bins, len(np.asarray(probs))))
    nll_value, floored = nll_with_floor_count(probs, labels)
    return MetricReport(
        ece=ece,
        adaptive_ece=ada,
        classwise_ece=ece_classwise(probs, labels, bins),
        nll=nll_value,
        brier=brier(probs, labels),
        accuracy=accuracy(probs, labels),
        mean_entropy=mean_entropy(probs),
        bins=rb,
        nll_floored=floored,
    )
