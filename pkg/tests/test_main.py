import csv

import pytest

import main
from src.HeteroTrack.errors import InvariantViolation

SMALL_SCENARIO = "time_steps = 3\nseed = 2\n"


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "scenario.cfg"
    path.write_text(SMALL_SCENARIO, encoding="utf-8")
    return path


def test_run_command(tmp_path, config_file):
    out = tmp_path / "out"
    assert main.main(["run", "--config", str(config_file), "--policy", "both", "--out", str(out)]) == 0
    for name in ("steps.csv", "assignments.csv", "robots.csv", "summary.csv", "ratios.csv", "config.toml", "run.log"):
        assert (out / name).exists(), name
    with open(out / "steps.csv", newline="", encoding="utf-8") as f:
        assert len(list(csv.DictReader(f))) == 3 * 2
    assert main.main(["run", "--config", str(out / "config.toml"), "--out", str(tmp_path / "again")]) == 0


def test_compare_command(tmp_path, config_file):
    out = tmp_path / "cmp"
    assert main.main(["compare", "--config", str(config_file), "--seeds", "2", "--workers", "1", "--out", str(out)]) == 0
    with open(out / "ratios.csv", newline="", encoding="utf-8") as f:
        assert len(list(csv.DictReader(f))) == 2 * 3


def test_bounds_command():
    assert main.main(["bounds", "--mode", "arbitrary", "--instances", "20"]) == 0


def test_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("n_robots = 4\n", encoding="utf-8")
    assert main.main(["run", "--config", str(bad), "--out", str(tmp_path / "out")]) == 3
    assert main.main(["run", "--config", str(tmp_path / "missing.cfg"), "--out", str(tmp_path / "out")]) == 3


def test_invariant_violation_exit_code(monkeypatch):
    def violated(*args, **kwargs):
        raise InvariantViolation("greedy below bound")

    monkeypatch.setattr(main, "run_bound_experiment", violated)
    assert main.main(["bounds", "--instances", "1"]) == 2


def test_unexpected_error_exit_code(monkeypatch):
    def broken(*args, **kwargs):
        raise RuntimeError("boom")

    monkeypatch.setattr(main, "run_bound_experiment", broken)
    assert main.main(["bounds"]) == 1


@pytest.mark.parametrize(
    "argv",
    [[], ["simulate"], ["run", "--policy", "random"], ["bounds", "--instances", "many"], ["compare", "--seeds"]],
)
def test_usage_error_is_a_config_error(argv):
    assert main.main(argv) == 3


def test_help_exits_cleanly():
    assert main.main(["--help"]) == 0
