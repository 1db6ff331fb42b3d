"""Command-line entry point.

Subcommands: ingest, fit, apply, eval, sweep, analyze, theory. Every command
is deterministic given its arguments (seeds included), writes all artifacts
under --out, and finishes by writing an out-dir manifest listing every file
produced (with sizes) plus the exact run configuration.

Stored JSON keeps metrics as [0, 1] fractions tagged scale="fraction"; the
console output prints the conventional percentages.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis, calibrators, metrics
from .calibrators import (
    CalibratorSpec,
    ClasswiseTemperature,
    Ets,
    FeatureClip,
    LogitClip,
    Temperature,
    apply as apply_calibrator,
)
from .datastore import Dataset, SplitSpec, canonical_logits, load_dataset, split
from .errors import (
    EXIT_DATA,
    EXIT_NUMERIC,
    ClipcalError,
    DataError,
    NumericDegeneracyError,
)
from .theory import (
    FeatureModel,
    compare_derivatives,
    curves_to_csv,
    emit_theory_curves,
    scan_derivative_sign,
    scan_monotonicity,
)

FIT_METHODS = ("fc", "ts", "ets", "cts", "logit_clip", "fc+ts", "fc+ets", "fc+cts")


class _OutDir:
    """Tracks every file a command writes so the manifest is complete."""

    def __init__(self, path: Path, command: str, config: dict):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.config = config
        self.files: list[Path] = []

    def write_text(self, name: str, text: str) -> Path:
        p = self.path / name
        p.write_text(text)
        self.files.append(p)
        return p

    def write_json(self, name: str, obj) -> Path:
        return self.write_text(name, json.dumps(obj, indent=2) + "\n")

    def write_bytes(self, name: str, data: bytes) -> Path:
        p = self.path / name
        p.write_bytes(data)
        self.files.append(p)
        return p

    def finish(self) -> Path:
        manifest = {
            "command": self.command,
            "config": self.config,
            "files": [{"path": p.name, "bytes": p.stat().st_size}
                      for p in self.files],
        }
        p = self.path / "run_manifest.json"
        p.write_text(json.dumps(manifest, indent=2) + "\n")
        return p


def _add_common(parser, out_required=True):
    parser.add_argument("--data", required=True, help="dataset directory")
    parser.add_argument("--out", required=out_required, help="output directory")
    parser.add_argument("--seed", type=int, default=0, help="split/subsample seed")
    parser.add_argument("--bins", type=int, default=metrics.DEFAULT_BINS,
                        help="bin count for every ECE variant")
    parser.add_argument("--val-fraction", type=float, default=0.1,
                        help="validation fraction for the seeded split")
    parser.add_argument("--split-file", default=None,
                        help='JSON file {"val": [...], "test": [...]} overriding the seeded split')


def _split_spec(args) -> SplitSpec:
    if args.split_file:
        data = json.loads(Path(args.split_file).read_text())
        return SplitSpec(val_idx=tuple(data["val"]), test_idx=tuple(data["test"]))
    return SplitSpec(val_fraction=args.val_fraction, seed=args.seed)


def _select_rows(ds: Dataset, args, which: str) -> np.ndarray:
    if which == "all":
        return np.arange(ds.n, dtype=np.int64)
    val, test = split(ds, _split_spec(args))
    return val if which == "val" else test


def _config_dict(args) -> dict:
    return {k: v for k, v in vars(args).items() if k != "func"}


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_ingest(args) -> int:
    ds = load_dataset(args.data)
    summary = {
        "n": ds.n, "d": ds.d, "k": ds.k,
        "has_head": ds.has_head,
        "has_stored_logits": ds.logits is not None,
        "logit_discrepancy": ds.logit_discrepancy,
        "source": ds.source,
        "feature_abs_max": float(np.max(np.abs(ds.features))),
    }
    print(json.dumps(summary, indent=2))
    if args.out:
        out = _OutDir(args.out, "ingest", _config_dict(args))
        out.write_json("dataset_summary.json", summary)
        out.finish()
    return 0


def _fit_pipeline(ds: Dataset, val_idx: np.ndarray, method: str
                  ) -> tuple[CalibratorSpec, list]:
    """Fit the named method on the validation rows only. Composite methods
    fit the feature clip first, then the downstream stage on the logits of
    the clipped features."""
    stages: list = []
    reports: list = []
    features_val = ds.features[val_idx]
    labels_val = ds.labels[val_idx]
    parts = method.split("+")
    if parts[0] == "fc":
        c, rep = calibrators.fit_feature_clip(ds, val_idx)
        stages.append(FeatureClip(c=c))
        reports.append(rep)
        features_val = calibrators.clip_features(features_val, c)
        logits_val = calibrators.compute_logits(ds, features_val)
        parts = parts[1:]
    else:
        logits_val = canonical_logits(ds, val_idx)
    for part in parts:
        if part == "ts":
            t, rep = calibrators.fit_temperature(logits_val, labels_val)
            stages.append(Temperature(T=t))
        elif part == "ets":
            t, _ = calibrators.fit_temperature(logits_val, labels_val)
            w, rep = calibrators.fit_ets(logits_val, labels_val, t)
            stages.append(Ets(T=t, w=tuple(w)))
        elif part == "cts":
            temps, rep = calibrators.fit_cts(logits_val, labels_val)
            stages.append(ClasswiseTemperature(T=tuple(temps)))
        elif part == "logit_clip":
            global_max = float(np.max(np.abs(canonical_logits(ds))))
            c, rep = calibrators.fit_logit_clip(logits_val, labels_val, global_max)
            stages.append(LogitClip(c=c))
        else:
            raise DataError(f"unknown fit method part '{part}'")
        reports.append(rep)
    return CalibratorSpec(stages=tuple(stages)), reports


def cmd_fit(args) -> int:
    ds = load_dataset(args.data)
    val_idx, _ = split(ds, _split_spec(args))
    spec, reports = _fit_pipeline(ds, val_idx, args.method)
    out = _OutDir(args.out, "fit", _config_dict(args))
    out.write_text("calibrator.json", spec.to_json())
    out.write_json("fit_report.json", {
        "method": args.method,
        "stages": [r.to_dict() for r in reports],
    })
    out.finish()
    for rep in reports:
        print(f"fitted {rep.method}: params={rep.params} "
              f"val NLL {rep.nll_before:.6f} -> {rep.nll_after:.6f}")
    return 0


def _load_calibrator(path) -> CalibratorSpec:
    return CalibratorSpec.from_json(Path(path).read_text())


def cmd_apply(args) -> int:
    ds = load_dataset(args.data)
    idx = _select_rows(ds, args, args.split)
    spec = (_load_calibrator(args.calibrator) if args.calibrator
            else CalibratorSpec(stages=()))
    probs = apply_calibrator(spec, ds, idx)
    out = _OutDir(args.out, "apply", _config_dict(args))
    out.write_bytes("probs.bin", np.ascontiguousarray(probs, dtype="<f4").tobytes())
    out.write_json("probs_meta.json", {
        "rows": int(len(idx)), "k": ds.k, "dtype": "f32",
        "row_indices": [int(i) for i in idx],
    })
    out.finish()
    print(f"wrote probabilities for {len(idx)} rows")
    return 0


def cmd_eval(args) -> int:
    ds = load_dataset(args.data)
    idx = _select_rows(ds, args, args.split)
    spec = (_load_calibrator(args.calibrator) if args.calibrator
            else CalibratorSpec(stages=()))
    probs = apply_calibrator(spec, ds, idx)
    report = metrics.evaluate(probs, ds.labels[idx], args.bins)
    out = _OutDir(args.out, "eval", _config_dict(args))
    out.write_json("metrics.json", report.to_dict())
    out.write_text("reliability_bins.csv", report.bins.to_csv())
    out.finish()
    print(f"n={len(idx)}  ECE={100 * report.ece:.2f}%  "
          f"adaptive ECE={100 * report.adaptive_ece:.2f}%  "
          f"classwise ECE={100 * report.classwise_ece:.2f}%")
    print(f"accuracy={100 * report.accuracy:.2f}%  NLL={report.nll:.6f}  "
          f"Brier={report.brier:.6f}  mean entropy={report.mean_entropy:.6f} nats")
    return 0


def _parse_grid(text: str) -> np.ndarray:
    """'start:stop:count' -> linspace; 'a,b,c' -> explicit values."""
    if ":" in text:
        start, stop, count = text.split(":")
        return np.linspace(float(start), float(stop), int(count))
    return np.asarray([float(x) for x in text.split(",")])


def cmd_sweep(args) -> int:
    ds = load_dataset(args.data)
    idx = _select_rows(ds, args, args.split)
    if args.c_grid:
        grid = _parse_grid(args.c_grid)
    else:
        levels = np.linspace(0.05, 1.0, args.grid_points)
        grid = np.unique(np.quantile(np.abs(ds.features).ravel(), levels))
    rows = calibrators.sweep_clip(ds, idx, grid, args.bins)
    out = _OutDir(args.out, "sweep", _config_dict(args))
    out.write_text("sweep.csv", calibrators.sweep_to_csv(rows))
    out.finish()
    best = min(rows, key=lambda r: r["ece"])
    print(f"{len(rows)} thresholds; best ECE {100 * best['ece']:.2f}% at c={best['c']:g}")
    return 0


def cmd_analyze(args) -> int:
    ds = load_dataset(args.data)
    idx = _select_rows(ds, args, args.split)
    probs = apply_calibrator(CalibratorSpec(stages=()), ds, idx)
    labels = ds.labels[idx]
    features = ds.features[idx]
    selection = analysis.select_groups(probs, labels, args.tau)
    out = _OutDir(args.out, "analyze", _config_dict(args))
    summary = {
        "tau": args.tau,
        "hce_count": int(selection.hce_idx.size),
        "lce_count": int(selection.lce_idx.size),
        "hce_empty": selection.hce_empty,
        "lce_empty": selection.lce_empty,
    }
    rows = analysis.overconfidence_counts(probs, labels)
    out.write_text("overconfidence.csv", analysis.counts_to_csv(rows))
    if not (selection.hce_empty or selection.lce_empty):
        subset = "all" if args.unit_subset == "all" else int(args.unit_subset)
        profile = analysis.unit_mean_profile(
            features, selection, subset, seed=args.seed, absolute=args.absolute)
        out.write_text("unit_profile.csv", analysis.profile_to_csv(profile))
        hist = analysis.feature_histogram(features, selection, args.hist_bins)
        out.write_text("feature_histogram.csv", analysis.histogram_to_csv(hist))
        summary["sigma_hat_hce"] = analysis.estimate_sigma(features, selection.hce_idx)
        summary["sigma_hat_lce"] = analysis.estimate_sigma(features, selection.lce_idx)
        if args.clip_c is not None:
            sub = Dataset(n=len(idx), d=ds.d, k=ds.k, features=features,
                          labels=labels, head_weights=ds.head_weights,
                          head_bias=ds.head_bias)
            table = analysis.entropy_table(sub, selection, args.clip_c)
            out.write_json("entropy_table.json", table)
            print(f"softmax entropies (log base e) at c={args.clip_c:g}: "
                  f"HCE {table['hce']}  LCE {table['lce']}")
    out.write_json("analysis_summary.json", summary)
    out.finish()
    print(json.dumps(summary, indent=2))
    return 0


def cmd_theory(args) -> int:
    model = FeatureModel(args.model)
    c_values = [float(x) for x in args.c.split(",")]
    sigma_grid = _parse_grid(args.sigma_grid)
    rows = emit_theory_curves(model, c_values, sigma_grid)
    out = _OutDir(args.out, "theory", _config_dict(args))
    out.write_text("theory_curves.csv", curves_to_csv(rows))
    if args.compare:
        out.write_json("derivative_comparison.json",
                       compare_derivatives(model, c_values, sigma_grid))
    if args.scan:
        out.write_json("monotonicity_scan.json", {
            "delta_h": [scan_monotonicity(model, c, sigma_grid) for c in c_values],
            "derivative_sign": [scan_derivative_sign(model, c, sigma_grid)
                                for c in c_values],
        })
    out.finish()
    print(f"{len(rows)} curve rows for model={model.value}, "
          f"c in {c_values}, {len(sigma_grid)} sigma points")
    return 0


# ---------------------------------------------------------------------------
# Parser / entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clipcal",
        description="Post-hoc calibration toolkit: feature clipping, "
                    "temperature-family baselines, metrics, and entropy analysis.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a dataset directory and summarize it")
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("fit", help="fit a calibrator on the validation split")
    _add_common(p)
    p.add_argument("--method", required=True, choices=FIT_METHODS)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("apply", help="apply a calibrator and dump probabilities")
    _add_common(p)
    p.add_argument("--calibrator", default=None, help="calibrator JSON (omit for vanilla)")
    p.add_argument("--split", choices=("val", "test", "all"), default="test")
    p.set_defaults(func=cmd_apply)

    p = sub.add_parser("eval", help="evaluate metrics on a split")
    _add_common(p)
    p.add_argument("--calibrator", default=None, help="calibrator JSON (omit for vanilla)")
    p.add_argument("--split", choices=("val", "test", "all"), default="test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="clip-threshold sweep")
    _add_common(p)
    p.add_argument("--split", choices=("val", "test", "all"), default="test")
    p.add_argument("--c-grid", default=None,
                   help="'start:stop:count' or comma-separated thresholds")
    p.add_argument("--grid-points", type=int, default=40,
                   help="quantile grid size when --c-grid is omitted")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analyze", help="HCE/LCE feature diagnostics")
    _add_common(p)
    p.add_argument("--split", choices=("val", "test", "all"), default="test")
    p.add_argument("--tau", type=float, default=0.95)
    p.add_argument("--unit-subset", default="all",
                   help="'all' or a seeded random unit count")
    p.add_argument("--hist-bins", type=int, default=50)
    p.add_argument("--clip-c", type=float, default=None,
                   help="emit the before/after softmax-entropy table at this threshold")
    p.add_argument("--absolute", action="store_true",
                   help="profile |x| instead of x (signed features)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("theory", help="entropy-difference curves and checks")
    p.add_argument("--out", required=True)
    p.add_argument("--model", required=True,
                   choices=[m.value for m in FeatureModel])
    p.add_argument("--c", required=True, help="comma-separated clip thresholds")
    p.add_argument("--sigma-grid", required=True, help="'start:stop:count' or values")
    p.add_argument("--compare", action="store_true",
                   help="also write the closed-form vs finite-difference report")
    p.add_argument("--scan", action="store_true",
                   help="also write monotonicity / derivative-sign scans")
    p.set_defaults(func=cmd_theory)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericDegeneracyError as exc:
        print(f"numeric degeneracy: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, ClipcalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
