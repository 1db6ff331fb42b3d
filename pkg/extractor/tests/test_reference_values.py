"""Reference-value checks against real exports.

These encode the reference calibration numbers for the cataloged pretrained
models and need real weights plus datasets, which this repository does not
ship.
Point CLIPCAL_EXPORTS at a directory holding extractor outputs:

    $CLIPCAL_EXPORTS/resnet50_cifar10/    (focal-calibration-release weights)
    $CLIPCAL_EXPORTS/resnet50_imagenet/   (standard-zoo weights, val split)

produced by e.g.

    extract --model resnet50 --dataset cifar10 --weights-path <ckpt> \
            --out $CLIPCAL_EXPORTS/resnet50_cifar10

All consumption of the calibration engine goes through its CLI.
"""

import csv
import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

EXPORTS = os.environ.get("CLIPCAL_EXPORTS")

pytestmark = pytest.mark.skipif(
    EXPORTS is None,
    reason="set CLIPCAL_EXPORTS to a directory of real exports")


def clipcal(*argv):
    result = subprocess.run([sys.executable, "-m", "clipcal.cli", *map(str, argv)],
                            capture_output=True, text=True)
    assert result.returncode == 0, result.stderr
    return result.stdout


def cifar_dir():
    path = Path(EXPORTS) / "resnet50_cifar10"
    if not path.is_dir():
        pytest.skip(f"missing export {path}")
    return path


def imagenet_dir():
    path = Path(EXPORTS) / "resnet50_imagenet"
    if not path.is_dir():
        pytest.skip(f"missing export {path}")
    return path


SPLIT = ("--val-fraction", "0.1", "--seed", "0")


def test_table_spot_vanilla_fc_and_ts_ece(tmp_path):
    """ResNet-50/CIFAR-10: vanilla ECE 4.34%, FC 1.10% at c ~ 0.23, TS base
    1.39%; tolerances +-0.5 ECE points and +-0.05 on c."""
    data = cifar_dir()
    out = tmp_path / "fit_fc"
    clipcal("fit", "--data", data, "--out", out, "--method", "fc", *SPLIT)
    spec = json.loads((out / "calibrator.json").read_text())
    c = spec["stages"][0]["c"]
    assert abs(c - 0.23) <= 0.05

    ev = tmp_path / "ev_vanilla"
    clipcal("eval", "--data", data, "--out", ev, *SPLIT)
    vanilla = json.loads((ev / "metrics.json").read_text())
    assert abs(100 * vanilla["ece"] - 4.34) <= 0.5

    ev_fc = tmp_path / "ev_fc"
    clipcal("eval", "--data", data, "--out", ev_fc,
            "--calibrator", out / "calibrator.json", *SPLIT)
    fc = json.loads((ev_fc / "metrics.json").read_text())
    assert abs(100 * fc["ece"] - 1.10) <= 0.5

    ts_out = tmp_path / "fit_ts"
    clipcal("fit", "--data", data, "--out", ts_out, "--method", "ts", *SPLIT)
    ev_ts = tmp_path / "ev_ts"
    clipcal("eval", "--data", data, "--out", ev_ts,
            "--calibrator", ts_out / "calibrator.json", *SPLIT)
    ts = json.loads((ev_ts / "metrics.json").read_text())
    assert abs(100 * ts["ece"] - 1.39) <= 0.5


def test_group_entropy_table(tmp_path):
    """ResNet-50/CIFAR-10 group entropies at the fitted threshold: HCE row near
    (0.0824, 0.5723, 0.4908) and LCE (0.0032, 0.1525, 0.1493), +-0.05/cell."""
    data = cifar_dir()
    fit_out = tmp_path / "fit"
    clipcal("fit", "--data", data, "--out", fit_out, "--method", "fc", *SPLIT)
    c = json.loads((fit_out / "calibrator.json").read_text())["stages"][0]["c"]
    out = tmp_path / "an"
    clipcal("analyze", "--data", data, "--out", out, "--clip-c", c, *SPLIT)
    table = json.loads((out / "entropy_table.json").read_text())
    expected = {"hce": (0.0824, 0.5723, 0.4908), "lce": (0.0032, 0.1525, 0.1493)}
    for group, (before, after, delta) in expected.items():
        assert abs(table[group]["h_before"] - before) <= 0.05
        assert abs(table[group]["h_after"] - after) <= 0.05
        assert abs(table[group]["delta"] - delta) <= 0.05


def test_imagenet_overconfidence_counts(tmp_path):
    """ImageNet ResNet-50 (zoo weights): correct/wrong counts above the four
    thresholds within +-5% of (5921/471, 5221/271, 4526/161, 3173/53)."""
    data = imagenet_dir()
    out = tmp_path / "counts"
    clipcal("analyze", "--data", data, "--out", out, "--split", "all")
    with open(out / "overconfidence.csv") as fh:
        rows = {float(r["threshold"]): r for r in csv.DictReader(fh)}
    expected = {0.80: (5921, 471), 0.90: (5221, 271),
                0.95: (4526, 161), 0.99: (3173, 53)}
    for threshold, (correct, wrong) in expected.items():
        got = rows[threshold]
        assert abs(int(got["correct"]) - correct) <= 0.05 * correct
        assert abs(int(got["wrong"]) - wrong) <= 0.05 * wrong


def test_clip_sweep_shape(tmp_path):
    """Sweep on ResNet-50/CIFAR-10: ECE above 25% at c = 0.15 and the
    minimum near the fitted threshold."""
    data = cifar_dir()
    fit_out = tmp_path / "fit"
    clipcal("fit", "--data", data, "--out", fit_out, "--method", "fc", *SPLIT)
    c_fit = json.loads((fit_out / "calibrator.json").read_text())["stages"][0]["c"]
    out = tmp_path / "sweep"
    clipcal("sweep", "--data", data, "--out", out,
            "--c-grid", "0.15,0.2,0.23,0.25,0.3,0.5,1.0,2.0", *SPLIT)
    with open(out / "sweep.csv") as fh:
        rows = [{k: float(v) for k, v in r.items()} for r in csv.DictReader(fh)]
    by_c = {round(r["c"], 4): r for r in rows}
    assert by_c[0.15]["ece"] > 0.25
    best = min(rows, key=lambda r: r["ece"])
    assert abs(best["c"] - c_fit) <= 0.1
