"""Dataset model, binary interchange format, deterministic splitting, head logits.

A dataset directory holds ``manifest.json`` plus raw little-endian, row-major
binary tensors (no header bytes):

* ``features.bin`` -- n*d float32, penultimate-layer activations
* ``labels.bin``   -- n uint32
* ``weights.bin``  -- k*d float32, classifier head weight matrix (row = class), optional
* ``bias.bin``     -- k float32, optional
* ``logits.bin``   -- n*k float32, optional

Tensors are float32 on disk but promoted to float64 in memory so downstream
metric arithmetic stays stable. At least one of (head weights + bias) or
stored logits must be present. When both are present, the max-abs discrepancy
between stored logits and ``features @ W.T + b`` is recorded at load time;
within the engine the recomputed logits are canonical whenever a head exists,
so that feature-space transforms and the identity pipeline share one
bit-exact logit path.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ChecksumMismatchError,
    DataError,
    LabelRangeError,
    ManifestError,
    MissingFileError,
    MissingHeadError,
    SizeMismatchError,
)

FORMAT_VERSION = 1
LOGIT_DISCREPANCY_WARN = 1e-3

# tensor name -> (on-disk dtype, in-memory dtype)
_TENSOR_DTYPES = {
    "features": ("<f4", np.float64),
    "labels": ("<u4", np.int64),
    "weights": ("<f4", np.float64),
    "bias": ("<f4", np.float64),
    "logits": ("<f4", np.float64),
}


def _freeze(arr: np.ndarray | None) -> np.ndarray | None:
    if arr is not None:
        arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Dataset:
    """Immutable in-memory dataset. Safe for concurrent read-only use."""

    n: int
    d: int
    k: int
    features: np.ndarray
    labels: np.ndarray
    head_weights: np.ndarray | None = None
    head_bias: np.ndarray | None = None
    logits: np.ndarray | None = None
    logit_discrepancy: float | None = None
    source: dict | None = None

    def __post_init__(self):
        if min(self.n, self.d, self.k) < 1:
            raise DataError(f"n, d, k must be positive, got ({self.n}, {self.d}, {self.k})")
        if self.features.shape != (self.n, self.d):
            raise SizeMismatchError(
                f"features: expected shape {(self.n, self.d)}, got {self.features.shape}")
        if self.labels.shape != (self.n,):
            raise SizeMismatchError(
                f"labels: expected shape {(self.n,)}, got {self.labels.shape}")
        if (self.head_weights is None) != (self.head_bias is None):
            raise DataError("head weights and bias must be provided together")
        if self.head_weights is not None and self.head_weights.shape != (self.k, self.d):
            raise SizeMismatchError(
                f"weights: expected shape {(self.k, self.d)}, got {self.head_weights.shape}")
        if self.head_bias is not None and self.head_bias.shape != (self.k,):
            raise SizeMismatchError(
                f"bias: expected shape {(self.k,)}, got {self.head_bias.shape}")
        if self.logits is not None and self.logits.shape != (self.n, self.k):
            raise SizeMismatchError(
                f"logits: expected shape {(self.n, self.k)}, got {self.logits.shape}")
        if self.head_weights is None and self.logits is None:
            raise DataError("dataset needs a classifier head or stored logits")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.k):
            bad = int(self.labels[(self.labels < 0) | (self.labels >= self.k)][0])
            raise LabelRangeError(f"labels: value {bad} outside [0, {self.k})")
        for arr in (self.features, self.labels, self.head_weights,
                    self.head_bias, self.logits):
            _freeze(arr)

    @property
    def has_head(self) -> bool:
        return self.head_weights is not None


def make_dataset(features, labels, head_weights=None, head_bias=None,
                 logits=None, source=None) -> Dataset:
    """Build a validated Dataset from arrays, recording the stored-vs-recomputed
    logit discrepancy when both routes exist."""
    features = np.ascontiguousarray(features, dtype=np.float64)
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    n, d = features.shape
    if head_weights is not None:
        head_weights = np.ascontiguousarray(head_weights, dtype=np.float64)
        head_bias = np.ascontiguousarray(head_bias, dtype=np.float64)
        k = head_weights.shape[0]
    elif logits is not None:
        k = np.asarray(logits).shape[1]
    else:
        raise DataError("dataset needs a classifier head or stored logits")
    if logits is not None:
        logits = np.ascontiguousarray(logits, dtype=np.float64)
    discrepancy = None
    if head_weights is not None and logits is not None:
        recomputed = features @ head_weights.T + head_bias
        discrepancy = float(np.max(np.abs(recomputed - logits))) if n else 0.0
        if discrepancy > LOGIT_DISCREPANCY_WARN:
            warnings.warn(
                f"stored logits differ from recomputed head logits by "
                f"{discrepancy:.3e} (> {LOGIT_DISCREPANCY_WARN:g})",
                stacklevel=2)
    return Dataset(n=n, d=d, k=k, features=features, labels=labels,
                   head_weights=head_weights, head_bias=head_bias,
                   logits=logits, logit_discrepancy=discrepancy, source=source)


def compute_logits(ds: Dataset, features: np.ndarray) -> np.ndarray:
    """Head logits ``features @ W.T + b`` for the given feature rows.

    Accumulates in float64; deterministic for fixed inputs within a process.
    """
    if not ds.has_head:
        raise MissingHeadError("dataset has no head weights/bias; cannot compute logits")
    features = np.asarray(features, dtype=np.float64)
    return features @ ds.head_weights.T + ds.head_bias


def canonical_logits(ds: Dataset, idx: np.ndarray | None = None) -> np.ndarray:
    """Logits for the selected rows: recomputed from features whenever a head
    exists (the canonical route), otherwise the stored export."""
    if ds.has_head:
        feats = ds.features if idx is None else ds.features[idx]
        return compute_logits(ds, feats)
    return ds.logits if idx is None else ds.logits[idx]


# ---------------------------------------------------------------------------
# Deterministic splitting
# ---------------------------------------------------------------------------

_MASK64 = (1 << 64) - 1
_SM64_GAMMA = 0x9E3779B97F4A7C15
_SM64_MIX1 = 0xBF58476D1CE4E5B9
_SM64_MIX2 = 0x94D049BB133111EB


class SplitMix64:
    """SplitMix64 PRNG (fixed constants; Steele et al.'s output mixing).

    Chosen as the split/subsample generator because the algorithm is a few
    lines of 64-bit arithmetic, so any implementation language reproduces
    identical streams from the same seed.
    """

    def __init__(self, seed: int):
        self._state = int(seed) & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _SM64_GAMMA) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _SM64_MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _SM64_MIX2) & _MASK64
        return z ^ (z >> 31)

    def below(self, bound: int) -> int:
        """Uniform-ish integer in [0, bound) via modulo reduction (documented:
        the bias is negligible for bound << 2**64 and keeps ports trivial)."""
        return self.next_u64() % bound


def permutation(n: int, seed: int) -> np.ndarray:
    """Fisher-Yates permutation of range(n) driven by SplitMix64(seed)."""
    rng = SplitMix64(seed)
    perm = list(range(n))
    for i in range(n - 1, 0, -1):
        j = rng.below(i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return np.asarray(perm, dtype=np.int64)


@dataclass(frozen=True)
class SplitSpec:
    """Either a seeded fractional split or explicit index lists."""

    val_fraction: float | None = None
    seed: int = 0
    val_idx: tuple[int, ...] | None = None
    test_idx: tuple[int, ...] | None = None


def split_indices(n: int, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    """Partition range(n) into (val, test) index arrays, sorted ascending.

    Fractional mode: a SplitMix64/Fisher-Yates permutation of the seed is cut
    at floor(val_fraction * n). Pure function of (n, spec).
    """
    if spec.val_idx is not None or spec.test_idx is not None:
        if spec.val_idx is None or spec.test_idx is None:
            raise DataError("explicit split needs both val_idx and test_idx")
        val = np.asarray(sorted(spec.val_idx), dtype=np.int64)
        test = np.asarray(sorted(spec.test_idx), dtype=np.int64)
        for name, arr in (("val_idx", val), ("test_idx", test)):
            if arr.size and (arr.min() < 0 or arr.max() >= n):
                raise DataError(f"{name}: index outside [0, {n})")
            if len(np.unique(arr)) != len(arr):
                raise DataError(f"{name}: duplicate indices")
        if np.intersect1d(val, test).size:
            raise DataError("val and test index sets overlap")
        return val, test
    if spec.val_fraction is None or not 0.0 < spec.val_fraction < 1.0:
        raise DataError(f"val_fraction must lie in (0, 1), got {spec.val_fraction}")
    n_val = int(np.floor(spec.val_fraction * n))
    if n_val < 1 or n_val >= n:
        raise DataError(
            f"degenerate split: floor({spec.val_fraction} * {n}) = {n_val}")
    perm = permutation(n, spec.seed)
    return np.sort(perm[:n_val]), np.sort(perm[n_val:])


def split(ds: Dataset, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    """(val, test) index sets for a dataset. See :func:`split_indices`."""
    return split_indices(ds.n, spec)


# ---------------------------------------------------------------------------
# Directory format
# ---------------------------------------------------------------------------

def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def save_dataset(ds: Dataset, directory) -> Path:
    """Write the dataset directory (manifest + tensors + sha256 sums)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    tensors = {"features": ds.features, "labels": ds.labels}
    if ds.head_weights is not None:
        tensors["weights"] = ds.head_weights
        tensors["bias"] = ds.head_bias
    if ds.logits is not None:
        tensors["logits"] = ds.logits
    names, sums = {}, {}
    for key, arr in tensors.items():
        fname = f"{key}.bin"
        raw = np.ascontiguousarray(arr, dtype=_TENSOR_DTYPES[key][0]).tobytes()
        (directory / fname).write_bytes(raw)
        names[key] = fname
        sums[fname] = _sha256(raw)
    manifest = {
        "format_version": FORMAT_VERSION,
        "n": ds.n, "d": ds.d, "k": ds.k,
        "dtype": "f32",
        "tensors": names,
        "sha256": sums,
    }
    if ds.source is not None:
        manifest["source"] = ds.source
    (directory / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return directory


def _expected_count(key: str, n: int, d: int, k: int) -> int:
    return {"features": n * d, "labels": n, "weights": k * d,
            "bias": k, "logits": n * k}[key]


def _expected_shape(key: str, n: int, d: int, k: int) -> tuple:
    return {"features": (n, d), "labels": (n,), "weights": (k, d),
            "bias": (k,), "logits": (n, k)}[key]


def load_dataset(directory) -> Dataset:
    """Load and validate a dataset directory.

    Raises a distinct error kind per failure mode, naming the offending file
    or field: MissingFileError, ManifestError, SizeMismatchError,
    ChecksumMismatchError, LabelRangeError.
    """
    directory = Path(directory)
    mpath = directory / "manifest.json"
    if not mpath.is_file():
        raise MissingFileError(f"missing manifest: {mpath}")
    try:
        manifest = json.loads(mpath.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest.json: invalid JSON ({exc})") from exc
    for field_name in ("format_version", "n", "d", "k", "dtype", "tensors"):
        if field_name not in manifest:
            raise ManifestError(f"manifest.json: missing field '{field_name}'")
    if manifest["format_version"] != FORMAT_VERSION:
        raise ManifestError(
            f"manifest.json: unsupported format_version {manifest['format_version']}")
    if manifest["dtype"] != "f32":
        raise ManifestError(f"manifest.json: unsupported dtype '{manifest['dtype']}'")
    n, d, k = (int(manifest[x]) for x in ("n", "d", "k"))
    tensors = manifest["tensors"]
    for required in ("features", "labels"):
        if required not in tensors:
            raise ManifestError(f"manifest.json: tensors missing '{required}'")
    sums = manifest.get("sha256", {})

    arrays = {}
    for key, fname in tensors.items():
        if key not in _TENSOR_DTYPES:
            raise ManifestError(f"manifest.json: unknown tensor '{key}'")
        fpath = directory / fname
        if not fpath.is_file():
            raise MissingFileError(f"missing tensor file: {fpath} (tensor '{key}')")
        raw = fpath.read_bytes()
        if fname in sums and _sha256(raw) != sums[fname]:
            raise ChecksumMismatchError(f"{fname}: sha256 mismatch")
        disk_dtype, mem_dtype = _TENSOR_DTYPES[key]
        itemsize = np.dtype(disk_dtype).itemsize
        expected = _expected_count(key, n, d, k)
        if len(raw) != expected * itemsize:
            raise SizeMismatchError(
                f"{fname}: holds {len(raw) // itemsize} elements, "
                f"manifest declares {expected}")
        arr = np.frombuffer(raw, dtype=disk_dtype).astype(mem_dtype)
        arrays[key] = arr.reshape(_expected_shape(key, n, d, k))

    if ("weights" in arrays) != ("bias" in arrays):
        raise ManifestError("manifest.json: weights and bias must appear together")
    labels = arrays["labels"]
    if labels.size and labels.max() >= k:
        raise LabelRangeError(
            f"labels.bin: value {int(labels.max())} outside [0, {k})")
    return make_dataset(
        arrays["features"], labels,
        head_weights=arrays.get("weights"), head_bias=arrays.get("bias"),
        logits=arrays.get("logits"), source=manifest.get("source"))
