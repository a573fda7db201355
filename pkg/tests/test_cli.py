import json
import subprocess
import sys

import numpy as np
import pytest
from PIL import Image

from groupaffect import heatmap
from groupaffect.cli import main
from groupaffect.dataset import load_manifest


@pytest.fixture
def dataset(tmp_path):
    path = tmp_path / "all.jsonl"
    assert main(["dataset", "gen", "--per-class", "6", "--size", "40x32", "--faces", "1..3", "--seed", "3", "--out", str(path)]) == 0
    return path


def test_gen_writes_manifest_and_pixels(dataset):
    m = load_manifest(dataset)
    assert len(m) == 18 and m.class_counts == {"Positive": 6, "Neutral": 6, "Negative": 6}
    assert m.records[0].image().shape == (32, 40, 3)


def test_split(dataset, tmp_path, capsys):
    tr, ho = tmp_path / "tr.jsonl", tmp_path / "ho.jsonl"
    rc = main(["dataset", "split", "--holdout", "0.34", "--seed", "1", "--in", str(dataset),
               "--out-train", str(tr), "--out-holdout", str(ho)])
    assert rc == 0
    assert len(load_manifest(tr)) == 12 and len(load_manifest(ho)) == 6
    assert all(r.split == "holdout" for r in load_manifest(ho).records)
    assert "hold-out 6" in capsys.readouterr().out


def test_heatmap_render_and_augment_preview(dataset, tmp_path, capsys):
    out = tmp_path / "hm"
    assert main(["heatmap", "render", "--manifest", str(dataset), "--kernel", "gaussian", "--out-dir", str(out), "--png"]) == 0
    rec = load_manifest(dataset).records[0]
    t = heatmap.read_tensor(out / f"{rec.id}.hmap")
    np.testing.assert_allclose(t, heatmap.record_heatmap(rec, heatmap.KernelKind.GAUSSIAN), rtol=1e-6)
    assert Image.open(out / f"{rec.id}.png").size == (40, 32)

    prev = tmp_path / "aug.png"
    assert main(["augment", "preview", "--in", str(out / f"{rec.id}.hmap"), "--seed", "5", "--out", str(prev)]) == 0
    params = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert set(params) >= {"rotation_deg", "zoom", "hflip"}
    assert Image.open(prev).size == (40, 32)


def test_baseline_avg_json(dataset, capsys):
    assert main(["baseline", "avg", "--manifest", str(dataset), "--json"]) == 0
    row = json.loads(capsys.readouterr().out)
    assert row["set"] == "averaging" and np.array(row["confusion"]).sum() == 18


def test_baseline_rf_text(dataset, capsys):
    assert main(["baseline", "rf", "--train", str(dataset), "--eval", str(dataset), "--trees", "5", "--seed", "2"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("train: accuracy") and "eval: accuracy" in out and "true \\ pred" in out


def test_run_and_compare(dataset, tmp_path, capsys):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text(
        f"model.kind = 3convnn\nkernel = linear\nmodel.input_hw = 24\nmodel.width_mult = 0.25\n"
        f"epochs = 1\nbatch_size = 6\nsplit.holdout = 0.34\npaths.train = {dataset.name}\npaths.out_dir = runs/a\n"
    )
    assert main(["run", "--config", str(cfg), "--deterministic"]) == 0
    report = json.loads((tmp_path / "runs" / "a" / "report.json").read_text())
    assert report["schema_version"] == 1 and "wall_clock_s" in report and report["wall_clock_s"] is None
    assert "wall_clock_s" in json.loads((tmp_path / "runs" / "a" / "timing.json").read_text())
    capsys.readouterr()
    assert main(["compare", "--reports", str(tmp_path / "runs")]) == 0
    out = capsys.readouterr().out
    assert "Linear Distribution Heatmaps (3-ConvNN)" in out and "35.59%" in out


def test_compare_empty_dir(tmp_path):
    assert main(["compare", "--reports", str(tmp_path)]) == 1


def test_errors_exit_2(tmp_path, capsys):
    assert main(["baseline", "avg", "--manifest", str(tmp_path / "missing.jsonl")]) == 2
    assert "error:" in capsys.readouterr().err


def test_bad_size_argument():
    with pytest.raises(SystemExit):
        main(["dataset", "gen", "--per-class", "1", "--size", "40", "--faces", "1..2", "--out", "x"])


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "groupaffect", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "run" in proc.stdout
