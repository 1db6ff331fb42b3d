"""Supported model/dataset pairs.

Every entry names the expected penultimate width d and class count k, the
weight source, and how to build the model. ImageNet entries use torchvision's
published weights and preprocessing; CIFAR entries mirror the architectures
of the public focal-calibration training release and take a local checkpoint
path (the release distributes .pth state dicts).
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class CatalogEntry:
    model_name: str
    dataset_name: str
    weights_source: str  # "standard-zoo" | "focal-calibration-release"
    d: int
    k: int
    builder: str  # torchvision attr or fcextract.models function name


@dataclass(frozen=True)
class ExtractJob:
    model_name: str
    dataset_name: str
    output_dir: str
    batch_size: int = 128
    weights_source: str | None = None
    weights_path: str | None = None  # local checkpoint for non-zoo sources
    data_root: str = "data"
    limit: int | None = None  # cap on sample count (smoke runs)
    device: str = "cpu"


_ZOO = [
    ("resnet50", 2048, "resnet50"),
    ("densenet121", 1024, "densenet121"),
    ("wide_resnet50", 2048, "wide_resnet50_2"),
    ("mobilenet_v2", 1280, "mobilenet_v2"),
    ("efficientnet_b0", 1280, "efficientnet_b0"),
    ("vit_b_16", 768, "vit_b_16"),
    ("vit_b_32", 768, "vit_b_32"),
    ("vit_l_16", 1024, "vit_l_16"),
    ("vit_l_32", 1024, "vit_l_32"),
    ("swin_b", 1024, "swin_b"),
]

_CIFAR = [
    ("resnet50", 2048, "cifar_resnet50"),
    ("resnet110", 64, "cifar_resnet110"),
]


def catalog() -> list[CatalogEntry]:
    entries = [
        CatalogEntry(name, "imagenet-val", "standard-zoo", d, 1000, builder)
        for name, d, builder in _ZOO
    ]
    for ds_name, k in (("cifar10", 10), ("cifar100", 100)):
        entries.extend(
            CatalogEntry(name, ds_name, "focal-calibration-release", d, k, builder)
            for name, d, builder in _CIFAR
        )
    return entries


def list_supported() -> list[dict]:
    """Stable identifiers with dataset compatibility and expected (d, k)."""
    return [
        {
            "model": e.model_name,
            "dataset": e.dataset_name,
            "weights_source": e.weights_source,
            "d": e.d,
            "k": e.k,
        }
        for e in catalog()
    ]


def find_entry(model_name: str, dataset_name: str) -> CatalogEntry:
    for e in catalog():
        if e.model_name == model_name and e.dataset_name == dataset_name:
            return e
    supported = ", ".join(f"{e.model_name}/{e.dataset_name}" for e in catalog())
    raise KeyError(
        f"unsupported model/dataset pair '{model_name}/{dataset_name}'; "
        f"supported: {supported}")
