"""End-to-end CLI coverage: pipelines, exit codes, JSON errors, CSV output."""

from __future__ import annotations

import csv
import io
import json

import pytest

from gesturekit import cli
from gesturekit.dataset import SampleRecord, load_manifest, save_manifest
from gesturekit.filter_selection import load_filter_set
from gesturekit.tensors import BBox, iou


def _rows(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One rendered dataset plus trained artifacts, shared by the CLI tests.

    Extent 112 is the smallest square where two of the largest Drag stimuli
    always fit side by side.
    """
    ws = tmp_path_factory.mktemp("cli_ws")
    data = ws / "data"
    base = ["--extent", "112", "--seed", "0"]
    assert cli.main(["gen-data", "--out", str(data), "--scenes", "12", *base]) == 0
    manifest = str(data / "manifest.jsonl")
    for cls, out in (("Point", "point.json"), ("Drag", "drag.json")):
        assert cli.main([
            "select-filters", "--manifest", manifest, "--class", cls,
            "--out", str(ws / out), "--top-n", "2", *base,
        ]) == 0
    assert cli.main([
        "train-head", "--head", "classify", "--manifest", manifest,
        "--out", str(ws / "clf"), "--epochs", "15", "--patience", "5", *base,
    ]) == 0
    assert cli.main([
        "train-head", "--head", "pinch", "--manifest", manifest,
        "--out", str(ws / "pinch"), "--epochs", "3", "--patience", "3", *base,
    ]) == 0
    assert cli.main([
        "train-head", "--head", "caption", "--manifest", manifest,
        "--out", str(ws / "cap"), "--epochs", "3", "--patience", "3", "--dim", "16", *base,
    ]) == 0
    session = {
        "seed": 0, "extent": [112, 112], "k": 2,
        "classifier": "clf",
        "filter_sets": {"Point": "point.json", "Drag": "drag.json"},
        "caption_model": "cap", "vocab": "cap/vocab.txt",
        "pinch_model": "pinch",
    }
    (ws / "session.json").write_text(json.dumps(session))
    return ws


def test_gen_data_layout(workspace):
    records = load_manifest(workspace / "data" / "manifest.jsonl")
    # 12 round-robin scenes: two of each gesture, each Pinch one an 8-frame run.
    assert len(records) == 26
    assert sum(r.gesture == "Pinch" for r in records) == 16
    for record in records:
        assert (workspace / "data" / record.frame_path).exists()


def test_gen_data_prints_manifest_path(tmp_path, capsys):
    assert cli.main(["gen-data", "--out", str(tmp_path / "d"), "--scenes", "1", "--extent", "64"]) == 0
    out = capsys.readouterr().out.strip()
    assert out.endswith("manifest.jsonl")


def test_select_filters_finds_the_planted_detector(workspace):
    fset = load_filter_set(workspace / "point.json")
    assert fset.class_label == "Point"
    assert fset.layer_name == "conv3"
    # The color detector planted for Point sits at filter 0 and must win.
    assert fset.indices[0] == 0
    assert 1 <= len(fset) <= 2


def test_localize_boxes_overlap_truth(workspace, tmp_path):
    records = load_manifest(workspace / "data" / "manifest.jsonl")
    record = next(r for r in records if r.gesture == "Point")
    out = tmp_path / "loc.json"
    assert cli.main([
        "localize", "--fset", str(workspace / "point.json"),
        "--frame", str(workspace / "data" / record.frame_path),
        "--out", str(out), "--extent", "112", "--seed", "0",
    ]) == 0
    doc = json.loads(out.read_text())
    assert doc["class"] == "Point"
    assert doc["boxes"]
    truth = record.fingertip_boxes[0]
    assert max(iou(BBox(*b), truth) for b in doc["boxes"]) > 0.0


def test_simulate_writes_predictions_and_timing(workspace, tmp_path, capsys):
    out_a = tmp_path / "a.jsonl"
    out_b = tmp_path / "b.jsonl"
    for out in (out_a, out_b):
        code = cli.main([
            "simulate", "--session", str(workspace / "session.json"),
            "--frames", str(workspace / "data" / "frames"), "--out", str(out),
        ])
        assert code == 0
    timing = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert timing["frames"] == 26
    assert timing["backbone_calls"] == 26
    assert set(timing["stage_s"]) == {"backbone", "classify", "head"}
    lines = out_a.read_text().splitlines()
    assert len(lines) == 26
    for line in lines:
        assert set(json.loads(line)) == {"frame", "raw", "validated", "response"}
    # Same config, same frames: byte-identical replay.
    assert out_a.read_bytes() == out_b.read_bytes()


def test_train_head_report_layout(workspace, tmp_path):
    report = _rows((workspace / "clf" / "report.csv").read_text())
    assert report
    assert set(report[0]) == {"phase", "epoch", "train_loss", "train_acc", "val_loss", "val_acc", "best"}
    assert {r["phase"] for r in report} == {"real"}
    assert sum(r["best"] == "1" for r in report) == 1
    assert (workspace / "clf" / "classifier.json").exists()

    # Two-phase: a synthetic warm-up phase precedes the real one.
    out = tmp_path / "clf2"
    manifest = str(workspace / "data" / "manifest.jsonl")
    assert cli.main([
        "train-head", "--head", "classify", "--manifest", manifest,
        "--synthetic", manifest, "--out", str(out),
        "--epochs", "3", "--patience", "3", "--extent", "112", "--seed", "0",
    ]) == 0
    phases = [r["phase"] for r in _rows((out / "report.csv").read_text())]
    assert phases.index("synthetic") < phases.index("real")
    assert {"synthetic", "real"} == set(phases)


def _write_jsonl(path, docs):
    path.write_text("".join(json.dumps(d) + "\n" for d in docs))


def test_evaluate_classify(tmp_path):
    tip = (BBox(0, 0, 8, 8),)
    truths = [
        SampleRecord(gesture="Point", fingertip_boxes=tip),
        SampleRecord(gesture="Point", fingertip_boxes=tip),
        SampleRecord(gesture="Drag", fingertip_boxes=tip),
        SampleRecord(gesture="None"),
    ]
    save_manifest(truths, tmp_path / "truth.jsonl")
    _write_jsonl(tmp_path / "pred.jsonl", [
        {"label": "Point"}, {"label": "Loupe"}, {"label": "Drag"}, {"label": "None"},
    ])
    out = tmp_path / "scores.csv"
    assert cli.main([
        "evaluate", "--task", "classify", "--pred", str(tmp_path / "pred.jsonl"),
        "--truth", str(tmp_path / "truth.jsonl"), "--out", str(out),
    ]) == 0
    rows = {r["class"]: r for r in _rows(out.read_text())}
    assert float(rows["Point"]["precision"]) == pytest.approx(1.0)
    assert float(rows["Point"]["recall"]) == pytest.approx(0.5)
    assert float(rows["Loupe"]["f1"]) == 0.0
    assert float(rows["macro"]["precision"]) == pytest.approx(0.75)
    assert float(rows["macro"]["f1"]) == pytest.approx((2 / 3 + 0 + 1 + 1) / 4)


def test_evaluate_detect_accepts_plain_and_engine_forms(tmp_path):
    box = BBox(8, 8, 24, 24)
    truths = [
        SampleRecord(gesture="Point", fingertip_boxes=(box,)),
        SampleRecord(gesture="Point", fingertip_boxes=(box,)),
    ]
    save_manifest(truths, tmp_path / "truth.jsonl")
    _write_jsonl(tmp_path / "pred.jsonl", [
        {"boxes": [[8, 8, 24, 24]]},
        {"response": {"type": "boxes", "boxes": [[8, 8, 24, 24]]}},
    ])
    out = tmp_path / "detect.csv"
    assert cli.main([
        "evaluate", "--task", "detect", "--pred", str(tmp_path / "pred.jsonl"),
        "--truth", str(tmp_path / "truth.jsonl"), "--out", str(out),
    ]) == 0
    metrics = {r["metric"]: float(r["value"]) for r in _rows(out.read_text())}
    assert metrics == {"precision": 1.0, "recall": 1.0, "f1": 1.0, "ap": 1.0, "avg_iou": 1.0}


def test_evaluate_caption_bleu(tmp_path):
    caption = "a red mug on the desk"
    truths = [SampleRecord(gesture="Loupe", captions=(caption,)) for _ in range(2)]
    save_manifest(truths, tmp_path / "truth.jsonl")
    _write_jsonl(tmp_path / "pred.jsonl", [{"text": caption}, {"text": caption.upper()}])
    out = tmp_path / "bleu.csv"
    assert cli.main([
        "evaluate", "--task", "caption", "--pred", str(tmp_path / "pred.jsonl"),
        "--truth", str(tmp_path / "truth.jsonl"), "--out", str(out),
    ]) == 0
    metrics = {r["metric"]: float(r["value"]) for r in _rows(out.read_text())}
    # Tokenization lowercases, so the shouted caption still scores 1.0.
    assert metrics == {"bleu-1": 1.0, "bleu-2": 1.0, "bleu-3": 1.0, "bleu-4": 1.0}


def test_evaluate_pinch(tmp_path):
    truths = [SampleRecord(gesture="Pinch", zoom="zoom_in"), SampleRecord(gesture="Pinch", zoom="no_zoom")]
    save_manifest(truths, tmp_path / "truth.jsonl")
    _write_jsonl(tmp_path / "pred.jsonl", [
        {"response": {"type": "zoom", "action": "zoom_in"}},
        {"action": "no_zoom"},
    ])
    out = tmp_path / "pinch.csv"
    assert cli.main([
        "evaluate", "--task", "pinch", "--pred", str(tmp_path / "pred.jsonl"),
        "--truth", str(tmp_path / "truth.jsonl"), "--out", str(out),
    ]) == 0
    rows = {r["class"]: r for r in _rows(out.read_text())}
    assert float(rows["macro"]["f1"]) == pytest.approx(1.0)


def test_evaluate_count_mismatch_is_a_data_error(tmp_path, capsys):
    save_manifest([SampleRecord(gesture="None")], tmp_path / "truth.jsonl")
    _write_jsonl(tmp_path / "pred.jsonl", [{"label": "None"}, {"label": "None"}])
    code = cli.main([
        "evaluate", "--task", "classify", "--pred", str(tmp_path / "pred.jsonl"),
        "--truth", str(tmp_path / "truth.jsonl"),
    ])
    assert code == 2
    err = json.loads(capsys.readouterr().err.strip())
    assert err["kind"] == "data"
    assert "2 predictions vs 1" in err["error"]


def test_usage_errors_exit_1_with_json(capsys):
    assert cli.main([]) == 1
    assert json.loads(capsys.readouterr().err.strip())["kind"] == "usage"
    assert cli.main(["frobnicate"]) == 1
    capsys.readouterr()
    assert cli.main(["localize"]) == 1  # required flags missing
    capsys.readouterr()
    code = cli.main([
        "select-filters", "--manifest", "m", "--class", "Point", "--out", "o",
        "--top-n", "2", "--alpha", "0.5",  # mutually exclusive
    ])
    assert code == 1
    assert json.loads(capsys.readouterr().err.strip())["kind"] == "usage"


def test_missing_files_exit_2_with_json(tmp_path, capsys):
    code = cli.main([
        "localize", "--fset", str(tmp_path / "none.json"), "--frame", str(tmp_path / "none.atn"),
    ])
    assert code == 2
    err = json.loads(capsys.readouterr().err.strip())
    assert err["kind"] == "data"


def test_config_file_supplies_defaults_flags_win(tmp_path):
    cfg = tmp_path / "defaults.json"
    cfg.write_text(json.dumps({"scenes": 1, "extent": 224}))
    # Config fills in scenes; the explicit flag overrides extent. The defaults
    # file is a global option, so it precedes the subcommand.
    out = tmp_path / "d1"
    assert cli.main(["--config", str(cfg), "gen-data", "--out", str(out), "--extent", "64"]) == 0
    records = load_manifest(out / "manifest.jsonl")
    assert len(records) == 1
    from gesturekit.dataset import load_frame

    assert load_frame(out / records[0].frame_path).dims == (64, 64, 3)


def test_config_file_validation(tmp_path, capsys):
    bad_key = tmp_path / "bad.json"
    bad_key.write_text(json.dumps({"wat": 1}))
    assert cli.main(["--config", str(bad_key), "gen-data", "--out", str(tmp_path / "x")]) == 2
    assert json.loads(capsys.readouterr().err.strip())["kind"] == "data"

    not_dict = tmp_path / "list.json"
    not_dict.write_text("[1, 2]")
    assert cli.main(["--config", str(not_dict), "gen-data", "--out", str(tmp_path / "y")]) == 2
    capsys.readouterr()

    assert cli.main(["--config", str(tmp_path / "missing.json"), "gen-data", "--out", str(tmp_path / "z")]) == 2


def test_pareto_bundled_table(tmp_path):
    out = tmp_path / "pareto.csv"
    assert cli.main(["pareto", "--out", str(out)]) == 0
    rows = _rows(out.read_text())
    assert len(rows) == 17
    flagged = {r["name"] for r in rows if r["non_dominated"] == "1"}
    assert flagged == {"MobileNet v2", "SelAE", "Darknet-53"}


def test_pareto_custom_csv(tmp_path, capsys):
    points = tmp_path / "points.csv"
    points.write_text("name,f1,params\nsmall,0.5,1\nmid,0.9,2\nbig,0.8,3\n")
    out = tmp_path / "front.csv"
    assert cli.main(["pareto", "--points", str(points), "--out", str(out)]) == 0
    rows = {r["name"]: r["non_dominated"] for r in _rows(out.read_text())}
    assert rows == {"small": "1", "mid": "1", "big": "0"}

    bad = tmp_path / "bad.csv"
    bad.write_text("name,f1\nx,0.5\n")
    assert cli.main(["pareto", "--points", str(bad)]) == 2
    assert json.loads(capsys.readouterr().err.strip())["kind"] == "data"
    empty = tmp_path / "empty.csv"
    empty.write_text("name,f1,params\n")
    assert cli.main(["pareto", "--points", str(empty)]) == 2


def test_sweep_grid(workspace, tmp_path, capsys):
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({"top_ns": [1], "betas": [0.9, 0.92]}))
    out = tmp_path / "sweep.csv"
    assert cli.main([
        "sweep", "--grid", str(grid), "--manifest", str(workspace / "data" / "manifest.jsonl"),
        "--class", "Point", "--out", str(out), "--extent", "112", "--seed", "0",
    ]) == 0
    rows = _rows(out.read_text())
    assert len(rows) == 2
    assert set(rows[0]) == {"layer", "top_n", "beta", "kernel", "min_area", "n_selected", "f1", "best"}
    assert sum(r["best"] == "1" for r in rows) == 1

    grid.write_text(json.dumps({"gammas": [1]}))
    assert cli.main([
        "sweep", "--grid", str(grid), "--manifest", str(workspace / "data" / "manifest.jsonl"),
        "--extent", "112",
    ]) == 2
    assert json.loads(capsys.readouterr().err.strip())["kind"] == "data"
