"""The ``extract`` command.

    extract --model M --dataset D --out DIR [--batch-size B] [--weights SOURCE]
            [--weights-path CKPT] [--data-root DIR] [--limit N]
    extract --list

Output is exactly the calibration engine's dataset directory format.
"""

from __future__ import annotations

import argparse
import json
import sys

from .capture import extract
from .catalog import ExtractJob, list_supported


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="extract",
        description="Export penultimate features / head / logits of a "
                    "pretrained classifier into a dataset directory.")
    parser.add_argument("--list", action="store_true",
                        help="print the supported model/dataset catalog and exit")
    parser.add_argument("--model", help="catalog model identifier")
    parser.add_argument("--dataset",
                        help="one of: cifar10, cifar100, imagenet-val")
    parser.add_argument("--out", help="output dataset directory")
    parser.add_argument("--batch-size", type=int, default=128)
    parser.add_argument("--weights", default=None,
                        help="weights source (standard-zoo or "
                             "focal-calibration-release); checked against the catalog")
    parser.add_argument("--weights-path", default=None,
                        help="local checkpoint for non-zoo weight sources")
    parser.add_argument("--data-root", default="data",
                        help="dataset root (imagenet-val expects "
                             "<root>/imagenet-val as an ImageFolder)")
    parser.add_argument("--limit", type=int, default=None,
                        help="only the first N samples (smoke runs)")
    parser.add_argument("--device", default="cpu")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.list:
        print(json.dumps(list_supported(), indent=2))
        return 0
    if not (args.model and args.dataset and args.out):
        parser.error("--model, --dataset, and --out are required unless --list")
    job = ExtractJob(
        model_name=args.model,
        dataset_name=args.dataset,
        output_dir=args.out,
        batch_size=args.batch_size,
        weights_source=args.weights,
        weights_path=args.weights_path,
        data_root=args.data_root,
        limit=args.limit,
        device=args.device,
    )
    try:
        out = extract(job)
    except KeyError as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return 2
    except (ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
