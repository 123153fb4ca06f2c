import json

import numpy as np
import pytest

from broomsat.cli import run
from broomsat.pipeline import STAGES, RunConfig

SMALL = {
    "paths.campaign": "camp",
    "paths.registry": "camp/fields.json",
    "paths.mlp_dir": "camp/mlp",
    "synth.n_pixels": 60,
    "synth.fields_per_class": 2,
    "lstm.lstm_units": [8, 4],
    "lstm.dense_units": 4,
    "train.epochs": 2,
    "train.folds": 2,
    "importance.repeats": 2,
}


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("run")
    (d / "run.json").write_text(json.dumps(SMALL))
    assert run(["synth", "--config", str(d / "run.json")]) == 0
    return d


def test_pipeline_end_to_end(workdir, capsys):
    cfg = str(workdir / "run.json")
    assert run(["pipeline", "--config", cfg, "--out", str(workdir / "out")]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert [l.split(":")[0] for l in lines] == STAGES
    rep = workdir / "out" / "report"
    for name in ("metrics.csv", "confusion.csv", "history.csv", "importance.csv", "density.csv",
                 "accuracy.svg", "loss.svg", "importance.svg"):
        assert (rep / name).is_file()
    with np.load(workdir / "out" / "mask" / "dataset.npz") as z:
        assert z["inputs"].shape[1:] == (48, 37)
        assert z["inputs"].shape[0] == 120
    for stage in STAGES:
        doc = json.loads((workdir / "out" / stage / "manifest.json").read_text())
        assert doc["stage"] == stage and len(doc["inputs_hash"]) == 64

    # unchanged inputs: every stage is a no-op
    before = {p: p.stat().st_mtime_ns for p in (workdir / "out").rglob("*") if p.is_file()}
    assert run(["pipeline", "--config", cfg, "--out", str(workdir / "out")]) == 0
    assert all("unchanged" in l for l in capsys.readouterr().out.strip().splitlines())
    after = {p: p.stat().st_mtime_ns for p in (workdir / "out").rglob("*") if p.is_file()}
    assert before == after

    # single stage rerun on demand
    assert run(["report", "--config", cfg, "--out", str(workdir / "out"), "--stage-force"]) == 0
    assert "report: done" in capsys.readouterr().out

    # a changed parameter invalidates that stage
    assert run(["importance", "--config", cfg, "--out", str(workdir / "out"), "--seed", "5"]) == 0
    assert "importance: done" in capsys.readouterr().out


def test_missing_registry_is_config_error(tmp_path, capsys):
    (tmp_path / "run.json").write_text(json.dumps({"paths.registry": "nowhere/fields.json"}))
    code = run(["ingest", "--config", str(tmp_path / "run.json"), "--out", str(tmp_path / "o")])
    assert code == 2
    err = capsys.readouterr().err
    assert "[ingest]" in err and "nowhere" in err


def test_config_errors(tmp_path):
    assert run(["ingest", "--config", str(tmp_path / "absent.json"), "--out", str(tmp_path)]) == 2
    (tmp_path / "bad.json").write_text(json.dumps({"no.such.key": 1}))
    assert run(["ingest", "--config", str(tmp_path / "bad.json"), "--out", str(tmp_path)]) == 2
    (tmp_path / "range.json").write_text(json.dumps({"scenes.max_cloud": 3}))
    assert run(["ingest", "--config", str(tmp_path / "range.json"), "--out", str(tmp_path)]) == 2
    assert run(["ingest"]) == 2


def test_later_stage_without_earlier_is_data_error(workdir, tmp_path):
    code = run(["train", "--config", str(workdir / "run.json"), "--out", str(tmp_path / "fresh")])
    assert code == 3


def test_relative_paths_resolve_against_config(tmp_path):
    (tmp_path / "run.json").write_text(json.dumps({"paths.registry": "a/fields.json"}))
    cfg = RunConfig.load(tmp_path / "run.json")
    assert cfg.path("paths.registry") == tmp_path / "a" / "fields.json"


def test_unknown_command_rejected():
    with pytest.raises(SystemExit):
        run(["fly"])
