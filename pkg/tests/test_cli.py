import csv
import json
import subprocess
import sys

import pytest

from pcdtrack.cli import STAGES, main, stage_seed


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def scene(tmp_path_factory):
    d = tmp_path_factory.mktemp("scene")
    assert run("simulate", "--preset", "x-crossing", "--seed", 7, "--out", d) == 0
    return d


def _bytes(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_simulate_writes_three_files(scene):
    assert sorted(p.name for p in scene.iterdir()) == ["events.json", "frames.jsonl", "gt.jsonl"]
    assert len(json.loads((scene / "events.json").read_text())) == 6


def test_simulate_deterministic(tmp_path, scene):
    assert run("simulate", "--preset", "x-crossing", "--seed", 7, "--out", tmp_path) == 0
    assert _bytes(tmp_path) == _bytes(scene)


def test_unknown_preset_exit_2(tmp_path, capsys):
    assert run("simulate", "--preset", "nowhere", "--out", tmp_path) == 2
    assert "unknown preset" in capsys.readouterr().err


def test_invalid_json_config(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"seed": 1,\n "preset": }')
    assert run("simulate", "--config", cfg, "--out", tmp_path) == 2
    assert "line 2" in capsys.readouterr().err


def test_config_values_and_flag_precedence(tmp_path, monkeypatch):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"preset": "single", "seed": 1, "out": str(tmp_path / "from_cfg")}))
    monkeypatch.setenv("PCDTRACK_OUT", str(tmp_path / "from_env"))
    assert run("simulate", "--config", cfg) == 0
    assert (tmp_path / "from_env" / "frames.jsonl").exists()
    assert run("simulate", "--config", cfg, "--out", tmp_path / "from_flag") == 0
    assert (tmp_path / "from_flag" / "frames.jsonl").exists()
    monkeypatch.delenv("PCDTRACK_OUT")
    assert run("simulate", "--config", cfg) == 0
    assert (tmp_path / "from_cfg" / "frames.jsonl").exists()


def test_track_full_and_deterministic(tmp_path, scene):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run("track", "--frames", scene / "frames.jsonl", "--ground-truth", scene / "gt.jsonl", "--out", d) == 0
    assert _bytes(a) == _bytes(b)
    row = next(csv.DictReader(open(a / "report.csv")))
    assert row["config"] == "full"
    assert float(row["mean_ed"]) < 0.1


def test_track_disable_cpda_labels_report(tmp_path, scene):
    assert run("track", "--frames", scene / "frames.jsonl", "--ground-truth", scene / "gt.jsonl",
               "--disable", "cpda", "--out", tmp_path) == 0
    assert next(csv.DictReader(open(tmp_path / "report.csv")))["config"] == "no-cpda"
    assert run("track", "--frames", scene / "frames.jsonl", "--disable", "gpu", "--out", tmp_path) == 2


def test_track_missing_input_exit_2(tmp_path):
    assert run("track", "--frames", tmp_path / "nope.jsonl", "--out", tmp_path) == 2
    assert run("track", "--out", tmp_path) == 2


def test_track_empty_frames_warns(tmp_path):
    # a subprocess, since pytest's own log handler would swallow the warning
    f = tmp_path / "empty.jsonl"
    f.write_text("")
    res = subprocess.run([sys.executable, "-m", "pcdtrack.cli", "track", "--frames", str(f), "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert (tmp_path / "tracks.jsonl").read_text() == ""
    assert "WARNING" in res.stderr and "empty" in res.stderr


def test_train_small_deterministic(tmp_path):
    cfg = tmp_path / "t.json"
    cfg.write_text(json.dumps({"dataset": {"n_scenes": 1}, "train": {"epochs": 2}}))
    for d in ("a", "b"):
        assert run("train", "--config", cfg, "--seed", 3, "--out", tmp_path / d) == 0
    assert _bytes(tmp_path / "a") == _bytes(tmp_path / "b")
    assert {"model.json", "train_history.csv", "recognition.csv"} <= set(_bytes(tmp_path / "a"))
    assert run("plot", "--history", tmp_path / "a" / "train_history.csv", "--out", tmp_path / "p") == 0
    assert (tmp_path / "p" / "loss_curve.svg").read_text().startswith("<svg")


def test_train_bad_config_exit_2(tmp_path):
    cfg = tmp_path / "t.json"
    cfg.write_text(json.dumps({"train": {"epochs": 1, "momentum_typo": 0.5}}))
    assert run("train", "--config", cfg, "--out", tmp_path) == 2


def test_adapt_csv_columns(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"n_source": 200, "n_unlabeled": 200, "n_test": 100, "n_labeled": 5,
                                "config": {"vae_epochs": 3, "clf_epochs": 3}}))
    for d in ("a", "b"):
        assert run("adapt", "--spec", spec, "--seeds", 2, "--out", tmp_path / d) == 0
    assert _bytes(tmp_path / "a") == _bytes(tmp_path / "b")
    rows = list(csv.DictReader(open(tmp_path / "a" / "adapt_results.csv")))
    assert len(rows) == 2
    assert {"source_only_accuracy", "adapted_accuracy"} <= set(rows[0])


def test_eval_twenty_five_rows(tmp_path):
    assert run("eval", "--out", tmp_path) == 0
    rows = list(csv.DictReader(open(tmp_path / "eval.csv")))
    assert len(rows) == 25
    assert len({(r["scenario"], r["config"]) for r in rows}) == 25


def test_eval_rejects_unknown_config(tmp_path):
    assert run("eval", "--configs", "full", "magic", "--out", tmp_path) == 2


def test_plot_ed_from_tracks(tmp_path, scene):
    assert run("track", "--frames", scene / "frames.jsonl", "--out", tmp_path) == 0
    assert run("plot", "--tracks", tmp_path / "tracks.jsonl", "--ground-truth", scene / "gt.jsonl",
               "--out", tmp_path) == 0
    assert "<polyline" in (tmp_path / "ed_per_frame.svg").read_text()
    assert run("plot", "--out", tmp_path) == 2


def test_stage_seeds_distinct():
    seeds = {stage_seed(0, s) for s in STAGES}
    assert len(seeds) == len(STAGES)
    assert stage_seed(5, "model_init") == stage_seed(5, "model_init")


def test_usage_error_exit_2():
    assert run("nonsense") == 2
