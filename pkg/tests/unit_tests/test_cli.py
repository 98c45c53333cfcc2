import json
import logging
import os

import pytest

from interacting_urns import cli
from interacting_urns.experiment_config import parse_config

logger = logging.getLogger(__name__)

THREE_CYCLE = """
[matrix]
rows = 0 1 0; 0 0 1; 1 0 0

[attitudes]
auto = competitive

[run]
n_steps = 2000
n_runs = 2
seed = 5
"""

TWO_CLASS = """
[matrix]
rows = 0 1 0; 1 0 0; 0.25 0.25 0.5

[attitudes]
auto = competitive
"""


def write(tmp_path, text, name="experiment.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_analyze_three_cycle():
    report = cli.cmd_analyze(parse_config(THREE_CYCLE))
    (cls,) = report["classes"]
    assert report["n_levels"] == 1
    assert cls["bipartite"] is False
    assert cls["period"] == 3
    assert cls["drift"]["invertible"] is True
    assert cls["prediction"]["kind"] == "deterministic_half"


def test_analyze_two_class_example():
    report = cli.cmd_analyze(parse_config(TWO_CLASS))
    assert report["levels"] == [["0.0"], ["1.0"]]
    kinds = [c["prediction"]["kind"] for c in report["classes"]]
    assert kinds == ["random_anti_synchronized", "affine_of_lower_levels"]


def test_analyze_two_closed_classes():
    text = TWO_CLASS.replace(
        "rows = 0 1 0; 1 0 0; 0.25 0.25 0.5",
        "rows = 0 1 0 0; 1 0 0 0; 0 0 0 1; 0 0 1 0",
    )
    report = cli.cmd_analyze(parse_config(text))
    assert report["levels"] == [["0.0", "0.1"]]


def test_limits_evaluates_deterministic_dependencies():
    text = """
[matrix]
rows = 0 1 0 0; 0 0 1 0; 1 0 0 0; 0.2 0.2 0.2 0.4

[attitudes]
auto = competitive
"""
    limits = cli.cmd_limits(parse_config(text))
    values = [c["value"] for c in limits["classes"]]
    assert values[0] == [0.5, 0.5, 0.5]
    assert values[1] == pytest.approx([0.5])


def test_limits_leaves_random_dependencies_open():
    limits = cli.cmd_limits(parse_config(TWO_CLASS))
    assert [c["value"] for c in limits["classes"]] == [None, None]
    assert limits["classes"][1]["constant"] == [1.0]


def test_simulate_writes_runs_and_manifest(out_dir):
    config = parse_config(THREE_CYCLE).with_overrides(output_dir=out_dir)
    files = cli.cmd_simulate(config)
    names = sorted(os.path.basename(f) for f in files)
    assert names == ["manifest.json", "run_0.csv", "run_1.csv"]

    with open(os.path.join(out_dir, "run_0.csv")) as f:
        assert f.readline().strip() == "step,agent,z"
    with open(os.path.join(out_dir, "manifest.json")) as f:
        manifest = json.load(f)
    assert manifest["config_hash"] == config.content_hash
    assert [r["spawn_key"] for r in manifest["runs"]] == [[0], [1]]


def test_simulate_is_byte_identical(tmp_path):
    contents = []
    for name in ("a", "b"):
        out = tmp_path / name
        out.mkdir()
        config = parse_config(THREE_CYCLE).with_overrides(output_dir=str(out))
        cli.cmd_simulate(config)
        contents.append((out / "run_1.csv").read_bytes())
    assert contents[0] == contents[1]


def test_missing_output_dir(tmp_path):
    missing = str(tmp_path / "nowhere")
    config = parse_config(THREE_CYCLE).with_overrides(output_dir=missing)
    with pytest.raises(FileNotFoundError) as e:
        cli.cmd_simulate(config)
    assert missing in str(e.value)


def test_main_exit_codes(tmp_path, out_dir):
    path = write(tmp_path, THREE_CYCLE)
    assert cli.main(["analyze", "--config", path]) == 0
    assert cli.main(["verify", "--config", path, "--out", out_dir, "--steps", "10"]) == 1
    with open(os.path.join(out_dir, "report.json")) as f:
        report = json.load(f)
    assert report["pass"] is False
    assert report["classes"][0]["statistic"] > 0.02

    broken = write(tmp_path, "[matrix]\nrows = 1 1\n", "broken.ini")
    assert cli.main(["analyze", "--config", broken]) == 2
    assert (
        cli.main(["simulate", "--config", path, "--out", str(tmp_path / "x")])
        == 2
    )


def test_environment_overrides_output_dir(tmp_path, out_dir, monkeypatch):
    path = write(tmp_path, THREE_CYCLE)
    monkeypatch.setenv("URNS_OUT", out_dir)
    monkeypatch.setenv("URNS_RUNS", "1")
    assert cli.main(["simulate", "--config", path]) == 0
    assert sorted(os.listdir(out_dir)) == ["manifest.json", "run_0.csv"]


def test_flags_win_over_environment(tmp_path, out_dir, monkeypatch):
    path = write(tmp_path, THREE_CYCLE)
    monkeypatch.setenv("URNS_OUT", str(tmp_path / "missing"))
    assert (
        cli.main(
            ["simulate", "--config", path, "--out", out_dir, "--format", "json"]
        )
        == 0
    )
    assert "run_0.json" in os.listdir(out_dir)


def test_invalid_overrides_exit_with_error(tmp_path, out_dir):
    path = write(tmp_path, THREE_CYCLE)
    for flags in (["--steps", "-5"], ["--runs", "0"], ["--seed", "-1"]):
        for command in ("simulate", "verify"):
            argv = [command, "--config", path, "--out", out_dir, *flags]
            assert cli.main(argv) == 2
    assert os.listdir(out_dir) == []


def test_invalid_environment_values_exit_with_error(
    tmp_path, out_dir, monkeypatch
):
    path = write(tmp_path, THREE_CYCLE)
    monkeypatch.setenv("URNS_STEPS", "-3")
    assert cli.main(["verify", "--config", path, "--out", out_dir]) == 2
    monkeypatch.delenv("URNS_STEPS")
    monkeypatch.setenv("URNS_LOG_LEVEL", "foo")
    assert cli.main(["analyze", "--config", path]) == 2
    monkeypatch.setenv("URNS_FORMAT", "xml")
    monkeypatch.setenv("URNS_LOG_LEVEL", "ERROR")
    assert cli.main(["simulate", "--config", path, "--out", out_dir]) == 2
