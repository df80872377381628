"""Exit codes and stderr contract of the atn-export command."""

import json

from atnexport.cli import main


def _stderr_json(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    return json.loads(err[-1])


def test_happy_path_prints_manifest(make_pngs, tmp_path, capsys):
    images = make_pngs(2)
    out = tmp_path / "out"
    rc = main(["--model", "squeezenet1_1", "--layers", "features.12",
               "--images", *images, "--out", str(out), "--size", "64"])
    assert rc == 0
    assert capsys.readouterr().out.strip() == str(out / "manifest.jsonl")
    assert len((out / "manifest.jsonl").read_text().splitlines()) == 2


def test_missing_layer_exits_nonzero_but_writes_the_rest(make_pngs, tmp_path, capsys):
    images = make_pngs(1)
    out = tmp_path / "out"
    rc = main(["--model", "squeezenet1_1", "--layers", "features.12", "nope",
               "--images", *images, "--out", str(out), "--size", "64"])
    assert rc == 2
    doc = _stderr_json(capsys)
    assert doc["kind"] == "data"
    assert doc["missing_layers"] == ["nope"]
    assert len(list(out.glob("*.atn"))) == 1


def test_unknown_model_is_a_data_error(make_pngs, tmp_path, capsys):
    rc = main(["--model", "not_a_model", "--layers", "x",
               "--images", *make_pngs(1), "--out", str(tmp_path / "out")])
    assert rc == 2
    assert _stderr_json(capsys)["kind"] == "data"


def test_unreadable_image_is_a_data_error(tmp_path, capsys):
    rc = main(["--model", "squeezenet1_1", "--layers", "features.12",
               "--images", str(tmp_path / "absent.png"), "--out", str(tmp_path / "out")])
    assert rc == 2
    assert _stderr_json(capsys)["kind"] == "data"


def test_usage_error_exits_one(capsys):
    rc = main(["--layers", "x"])
    assert rc == 1
    assert _stderr_json(capsys)["kind"] == "usage"
