import numpy as np
import pytest

from clipcal.datastore import make_dataset


def build_spiky_dataset(n=6000, seed=2024):
    """Synthetic overconfidence construction (fixed seed).

    4 classes, 12 units: two signal units per class carrying the true class
    (values 0.45-0.55), one noise unit per class. A quarter of the samples
    have their signal ablated and a single huge activation (3-4) placed in
    the noise unit of a uniformly chosen WRONG class; the head (signal
    weight 6, noise weight 1.8) turns that into a confidently wrong
    prediction. Clipping near the top of the signal band deflates exactly
    those predictions while never moving an argmax, so feature clipping
    slashes ECE at bit-identical accuracy.
    """
    rng = np.random.default_rng(seed)
    k, d = 4, 12
    labels = rng.integers(0, k, size=n)
    x = rng.uniform(0.0, 0.02, size=(n, d))
    spiked = rng.random(n) < 0.25
    for cls in range(k):
        rows = (labels == cls) & ~spiked
        cnt = int(rows.sum())
        for j in (2 * cls, 2 * cls + 1):
            x[rows, j] = 0.45 + rng.uniform(0.0, 0.1, size=cnt)
    spike_rows = np.flatnonzero(spiked)
    wrong_offset = rng.integers(1, k, size=len(spike_rows))
    spike_cls = (labels[spike_rows] + wrong_offset) % k
    x[spike_rows, 8 + spike_cls] = 3.0 + rng.uniform(0.0, 1.0, size=len(spike_rows))
    weights = np.zeros((k, d))
    for cls in range(k):
        weights[cls, 2 * cls] = weights[cls, 2 * cls + 1] = 6.0
        weights[cls, 8 + cls] = 1.8
    return make_dataset(x, labels, weights, np.zeros(k))


def random_head_dataset(rng, n=40, d=6, k=3, with_logits=False):
    """Random nonnegative features with a random head; optional stored logits."""
    features = np.abs(rng.normal(0.0, 1.0, size=(n, d)))
    labels = rng.integers(0, k, size=n)
    weights = rng.normal(0.0, 1.0, size=(k, d))
    bias = rng.normal(0.0, 0.5, size=k)
    logits = features @ weights.T + bias if with_logits else None
    return make_dataset(features, labels, weights, bias, logits=logits)


def stratified_calibrated_logits(tstar, reps=20):
    """Logits whose empirical NLL is exactly minimized at the uniform
    temperature tstar: rational probability rows replicated with integer
    label counts, z = tstar * ln(p)."""
    rows = np.array([
        [0.6, 0.3, 0.1],
        [0.2, 0.5, 0.3],
        [0.1, 0.2, 0.7],
        [0.4, 0.4, 0.2],
    ])
    logits, labels = [], []
    for p in rows:
        counts = np.round(p * reps).astype(int)
        assert counts.sum() == reps
        for cls, cnt in enumerate(counts):
            for _ in range(cnt):
                logits.append(tstar * np.log(p))
                labels.append(cls)
    return np.asarray(logits), np.asarray(labels)


@pytest.fixture(scope="session")
def spiky_dataset():
    return build_spiky_dataset()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
