"""Inference-time capture of head inputs, head parameters, and logits.

The features exported are the exact input tensor of the final linear head
(post global pooling and post activation where the architecture has one),
captured with a forward pre-hook during a plain no-grad evaluation pass: no
weight updates, no augmentation, fixed preprocessing, so extraction is
deterministic given the weights.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from . import models as model_defs
from .catalog import ExtractJob, find_entry
from .writer import write_dataset_dir

RECOMPUTE_TOL = 1e-3


def capture_from_model(model: torch.nn.Module, loader, device: str = "cpu",
                       head: torch.nn.Linear | None = None):
    """Run inference and return (features, labels, weights, bias, logits)."""
    model = model.to(device).eval()
    if head is None:
        head = model_defs.find_head(model)
    captured: list[torch.Tensor] = []

    def hook(_module, inputs):
        captured.append(inputs[0].detach().to("cpu", torch.float32))

    handle = head.register_forward_pre_hook(hook)
    logits_parts, label_parts = [], []
    try:
        with torch.no_grad():
            for images, labels in loader:
                out = model(images.to(device))
                logits_parts.append(out.detach().to("cpu", torch.float32))
                label_parts.append(labels.detach().to("cpu"))
    finally:
        handle.remove()
    features = torch.cat(captured).numpy()
    logits = torch.cat(logits_parts).numpy()
    labels = torch.cat(label_parts).numpy().astype(np.uint32)
    weights = head.weight.detach().cpu().numpy().astype(np.float32)
    bias = (head.bias.detach().cpu().numpy().astype(np.float32)
            if head.bias is not None else np.zeros(weights.shape[0], np.float32))
    if features.shape[1] != weights.shape[1]:
        raise ValueError(
            f"captured feature width {features.shape[1]} does not match head "
            f"input width {weights.shape[1]}")
    if logits.shape[1] != weights.shape[0]:
        raise ValueError(
            f"head output width {weights.shape[0]} does not match model "
            f"logits width {logits.shape[1]}; wrong capture layer")
    return features, labels, weights, bias, logits


def consistency_gap(features, weights, bias, logits) -> float:
    """Max-abs gap between captured logits and the recomputed head output."""
    recomputed = features.astype(np.float64) @ weights.astype(np.float64).T \
        + bias.astype(np.float64)
    return float(np.max(np.abs(recomputed - logits.astype(np.float64))))


def export(model, loader, out_dir, source: dict, device: str = "cpu",
           head=None) -> Path:
    """Capture and write one dataset directory, with the duplicate-path check."""
    features, labels, weights, bias, logits = capture_from_model(
        model, loader, device, head)
    gap = consistency_gap(features, weights, bias, logits)
    if gap > RECOMPUTE_TOL:
        raise ValueError(
            f"recomputed head logits differ from captured logits by {gap:.3e} "
            f"(> {RECOMPUTE_TOL:g}); capture layer is wrong for this model")
    return write_dataset_dir(out_dir, features, labels, weights, bias, logits,
                             source=dict(source, layer="head_input",
                                         consistency_gap=gap))


def _build_model(entry, job: ExtractJob):
    import torchvision.models as tvm

    if entry.weights_source == "standard-zoo":
        weights_enum = tvm.get_model_weights(entry.builder).DEFAULT
        model = getattr(tvm, entry.builder)(weights=weights_enum)
        return model, weights_enum.transforms()
    builder = getattr(model_defs, entry.builder)
    model = builder(num_classes=entry.k)
    if not job.weights_path:
        raise ValueError(
            f"{entry.weights_source} weights are distributed as local "
            f"checkpoints; pass --weights-path")
    model_defs.load_state_dict_tolerant(model, job.weights_path)
    return model, None


def _build_loader(entry, job: ExtractJob, transform):
    import torchvision.datasets as tvd
    import torchvision.transforms as T

    if entry.dataset_name in ("cifar10", "cifar100"):
        if transform is None:
            # normalization used by the CIFAR training release
            transform = T.Compose([
                T.ToTensor(),
                T.Normalize((0.4914, 0.4822, 0.4465), (0.2023, 0.1994, 0.2010)),
            ])
        cls = tvd.CIFAR10 if entry.dataset_name == "cifar10" else tvd.CIFAR100
        dataset = cls(root=job.data_root, train=False, download=True,
                      transform=transform)
    elif entry.dataset_name == "imagenet-val":
        dataset = tvd.ImageFolder(str(Path(job.data_root) / "imagenet-val"),
                                  transform=transform)
    else:
        raise ValueError(f"unknown dataset '{entry.dataset_name}'")
    if job.limit is not None:
        dataset = torch.utils.data.Subset(dataset, range(min(job.limit, len(dataset))))
    return torch.utils.data.DataLoader(dataset, batch_size=job.batch_size,
                                       shuffle=False, num_workers=0)


def extract(job: ExtractJob) -> Path:
    """Resolve a catalog entry, run capture, and write the dataset directory."""
    entry = find_entry(job.model_name, job.dataset_name)
    if job.weights_source and job.weights_source != entry.weights_source:
        raise ValueError(
            f"{job.model_name}/{job.dataset_name} uses weights source "
            f"'{entry.weights_source}', not '{job.weights_source}'")
    model, transform = _build_model(entry, job)
    loader = _build_loader(entry, job, transform)
    source = {
        "model": entry.model_name,
        "dataset": entry.dataset_name,
        "weights_source": entry.weights_source,
    }
    out = export(model, loader, job.output_dir, source, device=job.device)
    import json
    manifest = json.loads((out / "manifest.json").read_text())
    if manifest["d"] != entry.d or manifest["k"] != entry.k:
        raise ValueError(
            f"export shape (d={manifest['d']}, k={manifest['k']}) does not "
            f"match catalog (d={entry.d}, k={entry.k})")
    return out
