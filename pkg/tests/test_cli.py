import json
import math
import subprocess
import sys

import numpy as np
import pytest

from clipcal.cli import main
from clipcal.datastore import make_dataset, save_dataset
from clipcal.errors import EXIT_DATA

from conftest import build_spiky_dataset


@pytest.fixture(scope="module")
def spiky_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "spiky"
    save_dataset(build_spiky_dataset(n=2000, seed=2024), path)
    return path


@pytest.fixture()
def logits_only_dir(tmp_path):
    rng = np.random.default_rng(3)
    ds = make_dataset(np.abs(rng.normal(size=(40, 4))),
                      rng.integers(0, 3, size=40),
                      logits=rng.normal(size=(40, 3)))
    path = tmp_path / "logits_only"
    save_dataset(ds, path)
    return path


def run(argv):
    return main([str(a) for a in argv])


def test_ingest_summary(spiky_dir, capsys):
    assert run(["ingest", "--data", spiky_dir]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["n"] == 2000 and summary["d"] == 12 and summary["k"] == 4
    assert summary["has_head"]


def test_ingest_missing_dir_exits_with_data_code(tmp_path, capsys):
    assert run(["ingest", "--data", tmp_path / "nope"]) == EXIT_DATA


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        run(["fit", "--data", "x"])  # missing required --out/--method
    assert exc.value.code == 2


def test_fit_ts_is_greater_than_one(spiky_dir, tmp_path):
    out = tmp_path / "ts"
    assert run(["fit", "--data", spiky_dir, "--out", out, "--method", "ts",
                "--val-fraction", "0.25", "--seed", "7"]) == 0
    spec = json.loads((out / "calibrator.json").read_text())
    assert spec["stages"][0]["kind"] == "temperature"
    assert spec["stages"][0]["T"] > 1.0


def test_fit_fc_on_logits_only_dataset_errors(logits_only_dir, tmp_path, capsys):
    code = run(["fit", "--data", logits_only_dir, "--out", tmp_path / "o",
                "--method", "fc", "--val-fraction", "0.25"])
    assert code == EXIT_DATA
    assert "logit" in capsys.readouterr().err


def test_fit_composite_fc_then_ts(spiky_dir, tmp_path):
    out = tmp_path / "fcts"
    assert run(["fit", "--data", spiky_dir, "--out", out, "--method", "fc+ts",
                "--val-fraction", "0.25", "--seed", "7"]) == 0
    report = json.loads((out / "fit_report.json").read_text())
    assert [s["method"] for s in report["stages"]] == ["feature_clip", "temperature"]
    spec = json.loads((out / "calibrator.json").read_text())
    assert [s["kind"] for s in spec["stages"]] == ["feature_clip", "temperature"]


def test_eval_vanilla_equals_identity_calibrator(spiky_dir, tmp_path):
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    ident = tmp_path / "ident.json"
    ident.write_text(json.dumps({"stages": [{"kind": "identity"}]}))
    assert run(["eval", "--data", spiky_dir, "--out", out_a, "--seed", "7"]) == 0
    assert run(["eval", "--data", spiky_dir, "--out", out_b, "--seed", "7",
                "--calibrator", ident]) == 0
    assert (out_a / "metrics.json").read_text() == (out_b / "metrics.json").read_text()


def test_eval_hand_computed_four_sample_ece(tmp_path):
    """Stored-logit fixture with hand-derived ECE.

    Logit gaps are float32-exact dyadic values (1.125, 0, 2.25), so the four
    confidences are exactly 1/(1+e^-1.125), 1/2, and 1/(1+e^-2.25) twice;
    correctness is (1, 0, 1, 1). With 15 equal-width bins the samples land
    alone in bins 11, 7, and (paired) 13, so
    ECE = 1/4*|0-1/2| + 1/4*(1-c_a) + 2/4*(1-c_b).
    """
    logits = np.array([[1.125, 0.0], [0.0, 0.0], [2.25, 0.0], [0.0, 2.25]])
    ds = make_dataset(np.zeros((4, 2)), np.array([0, 1, 0, 1]), logits=logits)
    data_dir = tmp_path / "fixture"
    save_dataset(ds, data_dir)
    out = tmp_path / "out"
    assert run(["eval", "--data", data_dir, "--out", out, "--split", "all"]) == 0
    report = json.loads((out / "metrics.json").read_text())
    c_a = 1.0 / (1.0 + math.exp(-1.125))
    c_b = 1.0 / (1.0 + math.exp(-2.25))
    expected = 0.25 * 0.5 + 0.25 * (1.0 - c_a) + 0.5 * (1.0 - c_b)
    assert abs(report["ece"] - expected) <= 1e-12
    assert report["accuracy"] == 0.75
    assert report["scale"] == "fraction"


def test_eval_writes_reliability_csv(spiky_dir, tmp_path):
    out = tmp_path / "rb"
    assert run(["eval", "--data", spiky_dir, "--out", out, "--seed", "7"]) == 0
    lines = (out / "reliability_bins.csv").read_text().strip().split("\n")
    assert lines[0] == "bin_lo,bin_hi,count,avg_conf,accuracy,gap"
    assert len(lines) == 16


def test_sweep_rerun_is_byte_identical(spiky_dir, tmp_path):
    args = ["sweep", "--data", spiky_dir, "--seed", "7",
            "--c-grid", "0.3:3.0:8"]
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert run(args + ["--out", out_a]) == 0
    assert run(args + ["--out", out_b]) == 0
    assert (out_a / "sweep.csv").read_bytes() == (out_b / "sweep.csv").read_bytes()


def test_theory_row_count(tmp_path):
    out = tmp_path / "th"
    assert run(["theory", "--out", out, "--model", "half_normal",
                "--c", "0.5", "--sigma-grid", "0.1:3:100"]) == 0
    lines = (out / "theory_curves.csv").read_text().strip().split("\n")
    assert len(lines) == 101  # header + 100 rows


def test_theory_compare_and_scan_outputs(tmp_path):
    out = tmp_path / "th2"
    assert run(["theory", "--out", out, "--model", "rectified_mixture",
                "--c", "0.23,1.0", "--sigma-grid", "0.1:3:20",
                "--compare", "--scan"]) == 0
    comparison = json.loads((out / "derivative_comparison.json").read_text())
    assert comparison["max_abs_diff"] > 0  # transcription gap quantified
    scan = json.loads((out / "monotonicity_scan.json").read_text())
    assert len(scan["delta_h"]) == 2


def test_analyze_empty_hce_flagged(tmp_path, capsys):
    # all predictions correct and confident -> HCE group empty
    n, k, d = 60, 3, 3
    rng = np.random.default_rng(0)
    labels = rng.integers(0, k, size=n)
    feats = np.zeros((n, d))
    feats[np.arange(n), labels] = 1.0
    ds = make_dataset(feats, labels, 8.0 * np.eye(3), np.zeros(3))
    data_dir = tmp_path / "clean"
    save_dataset(ds, data_dir)
    out = tmp_path / "an"
    assert run(["analyze", "--data", data_dir, "--out", out, "--split", "all",
                "--tau", "0.95"]) == 0
    summary = json.loads((out / "analysis_summary.json").read_text())
    assert summary["hce_empty"] is True
    assert summary["lce_count"] == n


def test_analyze_full_outputs(spiky_dir, tmp_path):
    out = tmp_path / "full"
    assert run(["analyze", "--data", spiky_dir, "--out", out, "--seed", "7",
                "--tau", "0.95", "--unit-subset", "6", "--clip-c", "0.55"]) == 0
    for name in ("unit_profile.csv", "feature_histogram.csv",
                 "overconfidence.csv", "entropy_table.json",
                 "analysis_summary.json"):
        assert (out / name).is_file()
    summary = json.loads((out / "analysis_summary.json").read_text())
    assert summary["sigma_hat_hce"] > summary["sigma_hat_lce"]
    table = json.loads((out / "entropy_table.json").read_text())
    assert table["hce"]["delta"] > table["lce"]["delta"]


def test_run_manifest_lists_all_files(spiky_dir, tmp_path):
    out = tmp_path / "m"
    assert run(["eval", "--data", spiky_dir, "--out", out, "--seed", "7"]) == 0
    manifest = json.loads((out / "run_manifest.json").read_text())
    names = {f["path"] for f in manifest["files"]}
    assert names == {"metrics.json", "reliability_bins.csv"}
    for f in manifest["files"]:
        assert f["bytes"] == (out / f["path"]).stat().st_size
    assert manifest["command"] == "eval"
    assert manifest["config"]["seed"] == 7


def test_apply_writes_probabilities(spiky_dir, tmp_path):
    out = tmp_path / "ap"
    assert run(["apply", "--data", spiky_dir, "--out", out, "--seed", "7",
                "--split", "val", "--val-fraction", "0.25"]) == 0
    meta = json.loads((out / "probs_meta.json").read_text())
    raw = (out / "probs.bin").read_bytes()
    assert len(raw) == meta["rows"] * meta["k"] * 4
    probs = np.frombuffer(raw, dtype="<f4").reshape(meta["rows"], meta["k"])
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-5)


def test_console_script_help():
    result = subprocess.run([sys.executable, "-m", "clipcal.cli", "--help"],
                            capture_output=True, text=True)
    assert result.returncode == 0
    for sub in ("ingest", "fit", "apply", "eval", "sweep", "analyze", "theory"):
        assert sub in result.stdout


def test_numeric_degeneracy_exit_code(tmp_path, capsys):
    # a non-positive clip threshold is a numeric-degeneracy error (exit 4)
    code = run(["theory", "--out", tmp_path / "t", "--model", "half_normal",
                "--c", "0", "--sigma-grid", "0.5:1:2"])
    assert code == 4
    assert "degeneracy" in capsys.readouterr().err
