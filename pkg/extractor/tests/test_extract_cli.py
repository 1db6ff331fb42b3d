import json

import pytest

from fcextract.cli import main


def test_list_prints_catalog(capsys):
    assert main(["--list"]) == 0
    entries = json.loads(capsys.readouterr().out)
    assert {"model": "resnet50", "dataset": "imagenet-val",
            "weights_source": "standard-zoo", "d": 2048, "k": 1000} in entries


def test_unsupported_pair_exit_code(capsys):
    code = main(["--model", "resnet50", "--dataset", "mnist", "--out", "/tmp/x"])
    assert code == 2
    assert "unsupported" in capsys.readouterr().err


def test_missing_required_args():
    with pytest.raises(SystemExit) as exc:
        main(["--model", "resnet50"])
    assert exc.value.code == 2


def test_focal_source_requires_checkpoint_path(capsys, tmp_path):
    code = main(["--model", "resnet50", "--dataset", "cifar10",
                 "--out", str(tmp_path / "o"), "--weights", "standard-zoo"])
    assert code == 1
    assert "focal-calibration-release" in capsys.readouterr().err
