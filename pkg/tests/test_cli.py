import json

import pytest

from sgfs.cli import main


CONFIG = """
seed = 1
T = 400
burn_in = 100
timing = "off"
checkpoints = 4

[model]
kind = "linear"

[dataset]
N = 200
D = 2

[[samplers]]
kind = "sgfs"
n = 20
alpha = [0.0, 1.0]
"""


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "exp.toml"
    p.write_text(CONFIG)
    return p


def test_generate(tmp_path, capsys):
    assert main(["generate", "--kind", "logistic", "--N", "50", "--D", "3", "--seed", "4",
                 "--out", str(tmp_path)]) == 0
    out = json.loads(capsys.readouterr().out)
    meta = json.loads(open(out["metadata"]).read())
    assert meta["seed"] == 4 and len(meta["theta0"]) == 3
    assert open(out["dataset"]).readline().strip() == "x0,x1,x2,y"


def test_run_diagnose_compare(tmp_path, config, capsys):
    out_dir = tmp_path / "runs"
    assert main(["run", "--config", str(config), "--out", str(out_dir), "--seed", "9"]) == 0
    res = json.loads(capsys.readouterr().out)
    assert res["runs"] == 2 and res["failed"] == []
    snap = json.loads((out_dir / "run_001.json").read_text())
    assert snap["seed"] == 9 ^ 1
    assert main(["diagnose", "--config", str(config), "--out", str(out_dir)]) == 0
    capsys.readouterr()
    merged = tmp_path / "cmp"
    assert main(["compare", str(out_dir / "report.json"), "--out", str(merged)]) == 0
    lines = (merged / "plot_data.csv").read_text().splitlines()
    assert lines[0].split(",") == ["sampler", "knob_value", "inverse_atuc", "E1_at_T", "E2_at_T"]
    assert len(lines) == 3


def test_error_record(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text('T = 10\nburn_in = 5\n')
    assert main(["run", "--config", str(bad), "--out", str(tmp_path)]) == 1
    record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert record["error"] == "ConfigError" and record["command"] == "run"


def test_missing_config_file(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "nope.toml")]) == 1
    assert json.loads(capsys.readouterr().err)["error"] == "FileNotFoundError"
