"""fcextract: dump (features, labels, head, logits) from pretrained image
classifiers into the calibration engine's dataset directory format."""

from .catalog import ExtractJob, catalog, find_entry, list_supported
from .capture import capture_from_model, consistency_gap, export, extract
from .writer import write_dataset_dir

__version__ = "0.1.0"

__all__ = [
    "ExtractJob",
    "capture_from_model",
    "catalog",
    "consistency_gap",
    "export",
    "extract",
    "find_entry",
    "list_supported",
    "write_dataset_dir",
]
