"""End-to-end runs of the command-line pipeline in temp directories."""

import csv
import json
import math
import os

import pytest

from meshmoe.cli import main
from meshmoe.mesh import load_off

TINY_INI = """
[run]
seed = 13

[gate]
encoder_layers = 1
decoder_layers = 1
d_model = 8
heads = 2
ff_width = 16

[experts]
specs = oracle:0,oracle:1

[trainer]
epochs = 2
batch_size = 4
walks_train = 4
walks_infer = 8

[data]
classes = 2
per_class = 4
"""


@pytest.fixture()
def tiny_config(tmp_path):
    path = tmp_path / "tiny.ini"
    path.write_text(TINY_INI)
    return str(path)


def run(*argv):
    return main(list(argv))


def test_gen_data_outputs(tmp_path, tiny_config):
    out = str(tmp_path / "run")
    assert run("gen-data", "--config", tiny_config, "--out-dir", out) == 0
    data = os.path.join(out, "data")
    assert os.path.exists(os.path.join(data, "manifest.csv"))
    assert any(name.endswith(".off") for name in os.listdir(data))
    with open(os.path.join(out, "manifest_gen-data.json")) as fh:
        manifest = json.load(fh)
    assert manifest["seed"] == 13
    assert manifest["command"] == "gen-data"
    assert manifest["inputs"][tiny_config]  # sha256 of the config file
    assert manifest["config"]["data"]["classes"] == 2


def test_full_pipeline_report_rows(tmp_path, tiny_config):
    out = str(tmp_path / "run")
    assert run("gen-data", "--config", tiny_config, "--out-dir", out) == 0
    assert run("train", "--config", tiny_config, "--out-dir", out,
               "--static-lambda", "0") == 0
    assert os.path.exists(os.path.join(out, "model.ckpt"))
    assert os.path.exists(os.path.join(out, "train_log.csv"))
    assert run("eval", "--config", tiny_config, "--out-dir", out) == 0
    assert run("eval", "--config", tiny_config, "--out-dir", out,
               "--ensemble") == 0
    with open(os.path.join(out, "report.csv"), newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["split", "method", "metric", "value"]
    assert len(rows) == 3
    methods = {row[1] for row in rows[1:]}
    assert methods == {"moe", "ensemble"}
    for row in rows[1:]:
        assert row[0] == "test" and row[2] == "accuracy"
        assert 0.0 <= float(row[3]) <= 1.0


def test_agent_train_and_lambda_trace(tmp_path, tiny_config):
    out = str(tmp_path / "run")
    assert run("gen-data", "--config", tiny_config, "--out-dir", out) == 0
    assert run("train", "--config", tiny_config, "--out-dir", out) == 0
    assert run("plot-lambda", "--out-dir", out) == 0
    with open(os.path.join(out, "lambda_trace.csv"), newline="") as fh:
        rows = list(csv.DictReader(fh))
    # 2 epochs x 2 batches of 4 from 6 train meshes
    assert len(rows) == 4
    for row in rows:
        assert -1.0 <= float(row["lambda"]) <= 1.0


def test_flag_overrides_config(tmp_path, tiny_config):
    out = str(tmp_path / "run")
    assert run("gen-data", "--config", tiny_config, "--out-dir", out,
               "--seed", "99") == 0
    with open(os.path.join(out, "manifest_gen-data.json")) as fh:
        manifest = json.load(fh)
    assert manifest["seed"] == 99


def test_eval_without_checkpoint_fails(tmp_path, tiny_config, capsys):
    out = str(tmp_path / "run")
    assert run("gen-data", "--config", tiny_config, "--out-dir", out) == 0
    assert run("eval", "--config", tiny_config, "--out-dir", out) == 1
    assert "no checkpoint" in capsys.readouterr().err


def test_dump_walks_format(tmp_path, tiny_config, capsys):
    out = str(tmp_path / "run")
    assert run("gen-data", "--config", tiny_config, "--out-dir", out) == 0
    data = os.path.join(out, "data")
    off = os.path.join(data, sorted(n for n in os.listdir(data)
                                    if n.endswith(".off"))[0])
    mesh = load_off(off)
    expected_len = max(2, math.ceil(0.4 * len(mesh.vertices)))
    capsys.readouterr()
    assert run("dump-walks", "--mesh-file", off, "--count", "3",
               "--seed", "5") == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 3
    for line in lines:
        fields = line.split()
        assert fields[0] == mesh.mesh_id
        assert int(fields[1]) == expected_len
        indices = [int(v) for v in fields[2:]]
        assert len(indices) == expected_len
        assert len(set(indices)) == expected_len


def test_dump_walks_deterministic(tmp_path, tiny_config, capsys):
    out = str(tmp_path / "run")
    assert run("gen-data", "--config", tiny_config, "--out-dir", out) == 0
    data = os.path.join(out, "data")
    off = os.path.join(data, sorted(n for n in os.listdir(data)
                                    if n.endswith(".off"))[0])
    capsys.readouterr()
    assert run("dump-walks", "--mesh-file", off, "--seed", "7") == 0
    first = capsys.readouterr().out
    assert run("dump-walks", "--mesh-file", off, "--seed", "7") == 0
    assert capsys.readouterr().out == first


def test_plot_lambda_missing_log_fails(tmp_path, capsys):
    assert run("plot-lambda", "--out-dir", str(tmp_path)) == 1
    assert "no training log" in capsys.readouterr().err


def test_bad_lambda_range_fails(tmp_path, tiny_config, capsys):
    out = str(tmp_path / "run")
    assert run("gen-data", "--config", tiny_config, "--out-dir", out) == 0
    assert run("train", "--config", tiny_config, "--out-dir", out,
               "--lambda-range", "oops") == 1
    assert "lambda-range" in capsys.readouterr().err


def test_unknown_flag_exits_two(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run("gen-data", "--no-such-flag")
    assert exc.value.code == 2


def test_segmentation_pipeline(tmp_path):
    ini = tmp_path / "seg.ini"
    ini.write_text(TINY_INI.replace("classes = 2",
                                    "task = segmentation\nclasses = 2")
                   .replace("specs = oracle:0,oracle:1", "specs = edge_seg"))
    out = str(tmp_path / "run")
    assert run("gen-data", "--config", str(ini), "--out-dir", out) == 0
    assert run("train", "--config", str(ini), "--out-dir", out,
               "--static-lambda", "0") == 0
    assert run("eval", "--config", str(ini), "--out-dir", out) == 0
    with open(os.path.join(out, "report.csv"), newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[1][2] == "edge_accuracy"
    # hard voting is undefined for per-edge labels
    assert run("eval", "--config", str(ini), "--out-dir", out,
               "--ensemble") == 1
