import json
import subprocess
import sys
from pathlib import Path

import pytest

from mvdrkit.cli import main
from mvdrkit.signal import read_wav
from mvdrkit.simulate import read_manifest

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def small_config(tmp_path, steps=3, n_scenes=4):
    p = tmp_path / "c.toml"
    p.write_text(f"""
[dataset]
n_scenes = {n_scenes}
duration = 0.5

[system]
variant = "adl_mvdr"
channels = 4
dilations = [1]
repeats = 1
grunet_v_hidden = [8]
grunet_nn_hidden = [8]

[train]
max_steps = {steps}
batch_size = 2
chunk_seconds = 0.5
val_limit = 2
""")
    return p


def test_simulate_writes_manifest(tmp_path, capsys):
    cfg = small_config(tmp_path)
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "d"), "--seed", "3"]) == 0
    rows = read_manifest(tmp_path / "d" / "manifest.jsonl")
    assert len(rows) == 4
    assert "manifest" in capsys.readouterr().out


def test_eval_of_references_is_clamped(tmp_path, capsys):
    assert main(["simulate", "--out", str(tmp_path / "d"), "--n-scenes", "3"]) == 0
    manifest = tmp_path / "d" / "manifest.jsonl"
    enhanced = tmp_path / "enh"
    enhanced.mkdir()
    for row in read_manifest(manifest):
        (enhanced / f"{row['id']}.wav").write_bytes((tmp_path / "d" / row["reference"]).read_bytes())
    report = tmp_path / "r.json"
    assert main(["eval", "--manifest", str(manifest), "--enhanced", str(enhanced), "--out", str(report)]) == 0
    out = capsys.readouterr().out
    assert "Si-SNR" in out
    data = json.loads(report.read_text())
    assert data["overall"]["si_snr"] == pytest.approx(60.0)


def test_train_infer_eval_chain(tmp_path):
    cfg = small_config(tmp_path)
    d = tmp_path / "d"
    assert main(["simulate", "--config", str(cfg), "--out", str(d)]) == 0
    run = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--train-manifest", str(d / "manifest.jsonl"),
                 "--out", str(run)]) == 0
    assert (run / "best.ckpt").exists() and (run / "train_log.jsonl").exists()
    row = read_manifest(d / "manifest.jsonl")[0]
    wav = tmp_path / "one.wav"
    assert main(["infer", "--checkpoint", str(run / "last.ckpt"), "--mixture", str(d / row["mixture"]),
                 "--doa", str(row["doa"]), "--out", str(wav)]) == 0
    assert read_wav(wav).n_channels == 1
    enh = tmp_path / "enh"
    assert main(["infer", "--checkpoint", str(run / "last.ckpt"), "--manifest", str(d / "manifest.jsonl"),
                 "--out", str(enh)]) == 0
    assert main(["eval", "--manifest", str(d / "manifest.jsonl"), "--enhanced", str(enh)]) == 0


@pytest.mark.parametrize("argv", [
    ["simulate"],                                    # missing --out
    ["train", "--bogus-flag"],
    ["dance"],
    ["infer", "--checkpoint", "x.ckpt", "--out", "y.wav"],  # neither --mixture nor --manifest
])
def test_usage_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert "usage" in capsys.readouterr().err


def test_malformed_config_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[dataset\n")
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path / "d")]) == 2
    err = capsys.readouterr().err
    assert "usage" in err and "malformed" in err


def test_unknown_key_exits_2(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[system]\nvariant = 'beamformit'\n")
    assert main(["train", "--config", str(bad), "--train-manifest", "m.jsonl", "--out", str(tmp_path)]) == 2


def test_missing_train_manifest_exits_2(tmp_path):
    assert main(["train", "--out", str(tmp_path / "r")]) == 2


def test_runtime_failure_exits_1(tmp_path, capsys):
    code = main(["infer", "--checkpoint", str(tmp_path / "none.ckpt"), "--mixture", str(tmp_path / "m.wav"),
                 "--doa", "0.5", "--out", str(tmp_path / "o.wav")])
    assert code == 1
    assert "mvdrkit infer" in capsys.readouterr().err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "mvdrkit", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "simulate" in proc.stdout and "eval" in proc.stdout


@pytest.mark.slow
def test_toy_pipeline_under_budget(tmp_path):
    """simulate 8 scenes -> train 200 steps -> infer -> eval with the shipped toy config."""
    import time
    t0 = time.time()
    cfg = CONFIGS / "toy.toml"
    d, run, enh = tmp_path / "d", tmp_path / "run", tmp_path / "enh"
    assert main(["simulate", "--config", str(cfg), "--out", str(d)]) == 0
    assert main(["train", "--config", str(cfg), "--train-manifest", str(d / "manifest.jsonl"),
                 "--out", str(run)]) == 0
    assert main(["infer", "--checkpoint", str(run / "best.ckpt"), "--manifest", str(d / "manifest.jsonl"),
                 "--out", str(enh)]) == 0
    assert main(["eval", "--manifest", str(d / "manifest.jsonl"), "--enhanced", str(enh)]) == 0
    elapsed = time.time() - t0
    print(f"toy pipeline: {elapsed:.0f} s")
    assert elapsed < 30 * 60
