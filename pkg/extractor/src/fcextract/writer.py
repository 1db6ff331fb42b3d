"""Writer for the calibration-engine dataset directory format.

The format (the consumer's external interface) is: ``manifest.json`` with
{format_version:1, n, d, k, dtype:"f32", tensors:{...}, sha256:{...},
source:{model, dataset, layer}} plus raw little-endian row-major binaries:
features (n*d f32), labels (n u32), weights (k*d f32), bias (k f32),
logits (n*k f32). No header bytes.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1


def write_dataset_dir(out_dir, features, labels, weights, bias, logits,
                      source: dict) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    features = np.ascontiguousarray(features, dtype="<f4")
    labels = np.ascontiguousarray(labels, dtype="<u4")
    weights = np.ascontiguousarray(weights, dtype="<f4")
    bias = np.ascontiguousarray(bias, dtype="<f4")
    logits = np.ascontiguousarray(logits, dtype="<f4")
    n, d = features.shape
    k = weights.shape[0]
    if weights.shape != (k, d):
        raise ValueError(f"weights shape {weights.shape} does not match d={d}")
    if logits.shape != (n, k) or labels.shape != (n,) or bias.shape != (k,):
        raise ValueError("tensor shapes are inconsistent")

    tensors = {
        "features": ("features.bin", features),
        "labels": ("labels.bin", labels),
        "weights": ("weights.bin", weights),
        "bias": ("bias.bin", bias),
        "logits": ("logits.bin", logits),
    }
    names, sums = {}, {}
    for key, (fname, arr) in tensors.items():
        raw = arr.tobytes()
        (out_dir / fname).write_bytes(raw)
        names[key] = fname
        sums[fname] = hashlib.sha256(raw).hexdigest()
    manifest = {
        "format_version": FORMAT_VERSION,
        "n": int(n), "d": int(d), "k": int(k),
        "dtype": "f32",
        "tensors": names,
        "sha256": sums,
        "source": source,
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out_dir
