"""End-to-end command-line flows on a miniature dataset."""

import json
import os

import pytest

from avloc.cli import main
from avloc.training import AblationTable


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    return str(tmp_path_factory.mktemp("cli"))


@pytest.fixture(scope="module")
def dataset(workspace):
    out = os.path.join(workspace, "data")
    code = main(["synth", "--seed", "5", "--out", out, "--videos", "8",
                 "--T", "4", "--da", "6", "--dv", "8", "--h", "2", "--w", "2",
                 "--classes", "3", "--snr", "3.0"])
    assert code == 0
    return os.path.join(out, "manifest.json")


def test_synth_writes_manifest_and_features(dataset):
    doc = json.load(open(dataset))
    assert doc["classes"] == 3 and doc["T"] == 4
    assert len(doc["entries"]) == 8
    for entry in doc["entries"]:
        assert os.path.exists(os.path.join(os.path.dirname(dataset), entry["path"]))


def test_synth_is_deterministic_across_invocations(workspace):
    out1 = os.path.join(workspace, "det1")
    out2 = os.path.join(workspace, "det2")
    for out in (out1, out2):
        assert main(["synth", "--seed", "9", "--out", out, "--videos", "3",
                     "--T", "4", "--da", "6", "--dv", "8", "--h", "2", "--w", "2",
                     "--classes", "2", "--snr", "2.0"]) == 0
    for name in sorted(os.listdir(out1)):
        assert open(os.path.join(out1, name), "rb").read() == \
            open(os.path.join(out2, name), "rb").read()


def test_train_eval_round_trip(dataset, workspace):
    run_dir = os.path.join(workspace, "run")
    code = main(["train", "--manifest", dataset, "--mode", "supervised",
                 "--epochs", "2", "--batch", "4", "--lr", "5e-4", "--seed", "0",
                 "--out", run_dir, "--motion", "pfme",
                 "--temporal-attention", "on", "--scale-mode", "sqrt"])
    assert code == 0
    report = json.load(open(os.path.join(run_dir, "report.json")))
    assert len(report["losses"]) == 2
    assert report["config"]["model"]["motion"] == "pfme"

    report_path = os.path.join(workspace, "eval.json")
    code = main(["eval", "--manifest", dataset,
                 "--checkpoint", os.path.join(run_dir, "checkpoint"),
                 "--report", report_path])
    assert code == 0
    doc = json.load(open(report_path))
    assert doc["accuracy"] == report["accuracy"]
    assert len(doc["predictions"]) == 8
    record = doc["predictions"][0]
    assert set(record) == {"video_id", "S_e", "S_c", "decoded"}
    assert len(record["S_e"]) == 4 and len(record["decoded"]) == 4


def test_train_motion_flag_spellings(dataset, workspace):
    run_dir = os.path.join(workspace, "run_future")
    code = main(["train", "--manifest", dataset, "--epochs", "1",
                 "--batch", "4", "--out", run_dir, "--motion", "future-only",
                 "--temporal-attention", "off", "--scale-mode", "linear"])
    assert code == 0
    report = json.load(open(os.path.join(run_dir, "report.json")))
    assert report["config"]["model"]["motion"] == "future_only"
    assert report["config"]["model"]["temporal_attention"] is False
    assert report["config"]["model"]["scale_mode"] == "linear"


def test_eval_on_missing_checkpoint_fails_cleanly(dataset, workspace):
    code = main(["eval", "--manifest", dataset,
                 "--checkpoint", os.path.join(workspace, "nope"),
                 "--report", os.path.join(workspace, "r.json")])
    assert code == 2


def test_ablate_writes_json_and_csv(dataset, workspace, monkeypatch):
    import avloc.cli as cli
    monkeypatch.setattr(cli, "ABLATE_EPOCHS", 1)
    out = os.path.join(workspace, "ablation")
    code = main(["ablate", "--manifest", dataset, "--seeds", "0,1", "--out", out])
    assert code == 0
    table = AblationTable.from_csv(open(os.path.join(out, "ablation.csv")).read())
    assert len(table.rows) == 8  # 4 variants x 2 seeds
    doc = json.loads(open(os.path.join(out, "ablation.json")).read())
    assert set(doc["summary"]) == {r.variant for r in table.rows}


def test_gradcheck_command_exits_zero_on_success(capsys):
    assert main(["gradcheck", "--module", "motion"]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "FAIL" not in out


def test_gradcheck_rejects_unknown_module():
    assert main(["gradcheck", "--module", "flux_capacitor"]) == 2
