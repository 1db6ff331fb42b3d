"""Independent loop-based oracles used across the test suite.

Everything here is written with plain Python loops and scalar math so the
vectorized implementations are checked against a second, independent route.
The binning rule (floor(value * M), last bin closed) and the summation
associations (per-bin, then per-class) are part of the documented contracts
and are shared; all arithmetic is re-derived.
"""

from __future__ import annotations

import math


def argmax_conf(probs_row):
    """First-max argmax plus its value, matching the documented tie-break."""
    best = 0
    for j in range(1, len(probs_row)):
        if probs_row[j] > probs_row[best]:
            best = j
    return best, float(probs_row[best])


def _bin_of(value: float, bins: int) -> int:
    b = int(value * bins)
    return bins - 1 if b > bins - 1 else b


def ece_equal_width(probs, labels, bins):
    n = len(probs)
    pred, conf = zip(*(argmax_conf(row) for row in probs))
    total = 0.0
    for m in range(bins):
        cnt, csum, asum = 0, 0.0, 0.0
        for i in range(n):
            if _bin_of(conf[i], bins) == m:
                cnt += 1
                csum += conf[i]
                asum += 1.0 if pred[i] == labels[i] else 0.0
        if cnt:
            total += (cnt / n) * abs(asum / cnt - csum / cnt)
    return total


def ece_classwise(probs, labels, bins):
    n, k = len(probs), len(probs[0])
    total = 0.0
    for cls in range(k):
        class_total = 0.0
        for m in range(bins):
            cnt, csum, asum = 0, 0.0, 0.0
            for i in range(n):
                v = float(probs[i][cls])
                if _bin_of(v, bins) == m:
                    cnt += 1
                    csum += v
                    asum += 1.0 if labels[i] == cls else 0.0
            if cnt:
                class_total += (cnt / n) * abs(asum / cnt - csum / cnt)
        total += class_total
    return total / k


def ece_adaptive(probs, labels, bins):
    n = len(probs)
    pred, conf = zip(*(argmax_conf(row) for row in probs))
    order = sorted(range(n), key=lambda i: conf[i])  # stable: ties keep index order
    q, r = divmod(n, bins)
    sizes = [q + 1] * r + [q] * (bins - r)
    total, start = 0.0, 0
    for size in sizes:
        chunk = order[start:start + size]
        csum = sum(conf[i] for i in chunk)
        asum = sum(1.0 for i in chunk if pred[i] == labels[i])
        total += (size / n) * abs(asum / size - csum / size)
        start += size
    return total


def nll(probs, labels):
    total = 0.0
    for i, row in enumerate(probs):
        total += -math.log(max(float(row[labels[i]]), 1e-300))
    return total / len(probs)


def brier(probs, labels):
    total = 0.0
    for i, row in enumerate(probs):
        for j, p in enumerate(row):
            target = 1.0 if j == labels[i] else 0.0
            total += (float(p) - target) ** 2
    return total / len(probs)


def mean_entropy(probs):
    total = 0.0
    for row in probs:
        for p in row:
            p = float(p)
            if p > 0:
                total += -p * math.log(p)
    return total / len(probs)


def accuracy(probs, labels):
    hits = sum(1 for i, row in enumerate(probs) if argmax_conf(row)[0] == labels[i])
    return hits / len(probs)


def erf_maclaurin(x: float) -> float:
    """erf via its Maclaurin series, summed to float convergence."""
    total = 0.0
    term = x
    n = 0
    while abs(term) > 1e-18:
        total += term / (2 * n + 1)
        n += 1
        term *= -x * x / n
    return 2.0 / math.sqrt(math.pi) * total


def neg_f_log_f(f):
    """Entropy integrand -f ln f with the 0 ln 0 := 0 convention."""
    def g(x):
        v = f(x)
        return -v * math.log(v) if v > 0 else 0.0
    return g
