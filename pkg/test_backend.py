"""
Tests for the scenario harness: config validation, output bundles and the
command line.
"""

import json
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
import yaml

import run_scenarios
from bohm_backend.backend import ScenarioBackend
from bohm_backend.models import CheckResult, ScenarioReport
from bohm_backend.report import qtm_state_table, summary_markdown, trajectory_table, write_qtm_states
from bohm_backend.scenarios import SCENARIO_RUNNERS, check
from bohm_dynamics.models import Ensemble, QtmState
from wave_lattice.errors import ConfigurationError

CONFIGS = Path(__file__).parent / "configs"


@pytest.fixture
def backend(tmp_path, monkeypatch):
    monkeypatch.setenv("PILOTWAVE_STRICT", "0")
    return ScenarioBackend(output_dir=str(tmp_path / "output"))


def write_config(path: Path, data: dict) -> str:
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return str(path)


def test_every_scenario_is_registered_and_described(backend):
    names = [s["name"] for s in backend.list_scenarios()]
    assert sorted(names) == sorted(SCENARIO_RUNNERS)
    description = backend.describe("stern_gerlach")
    assert description["required_blocks"] == ["trajectories"]
    with pytest.raises(ConfigurationError) as info:
        backend.describe("double_slit")
    assert "ring_state" in str(info.value)


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.yaml")), ids=lambda p: p.stem)
def test_shipped_configs_validate(backend, path):
    config = backend.load_config(str(path))
    assert config.scenario in SCENARIO_RUNNERS


def test_seed_override(backend):
    config = backend.load_config(str(CONFIGS / "ring_state.yaml"), seed=99)
    assert config.seed == 99 and config.trajectory_seed == 99


def test_velocity_kick_is_a_positive_named_parameter(backend, tmp_path):
    base = yaml.safe_load((CONFIGS / "free_gaussian.yaml").read_text())
    assert backend.load_config(str(CONFIGS / "free_gaussian.yaml")).parameters.velocity_kick == 0.5
    still = dict(base, parameters={"velocity_kick": 0.0})
    with pytest.raises(ConfigurationError) as info:
        backend.load_config(write_config(tmp_path / "still.yaml", still))
    assert "parameters.velocity_kick" in str(info.value)


def test_invalid_configs_name_the_offending_field(backend, tmp_path):
    base = yaml.safe_load((CONFIGS / "ring_state.yaml").read_text())

    typo = dict(base, solver=dict(base["solver"], stepsize=0.1))
    with pytest.raises(ConfigurationError) as info:
        backend.load_config(write_config(tmp_path / "typo.yaml", typo))
    assert "solver.stepsize" in str(info.value)

    negative = dict(base, solver=dict(base["solver"], dt=-1.0))
    with pytest.raises(ConfigurationError) as info:
        backend.load_config(write_config(tmp_path / "negative.yaml", negative))
    assert "solver.dt" in str(info.value)

    incomplete = {k: v for k, v in base.items() if k != "grid"}
    with pytest.raises(ConfigurationError) as info:
        backend.load_config(write_config(tmp_path / "incomplete.yaml", incomplete))
    assert "grid" in str(info.value)

    (tmp_path / "list.yaml").write_text("- 1\n- 2\n", encoding="utf-8")
    with pytest.raises(ConfigurationError):
        backend.load_config(str(tmp_path / "list.yaml"))
    with pytest.raises(ConfigurationError):
        backend.load_config(str(tmp_path / "missing.yaml"))


def test_check_semantics():
    assert check("a", 0.01, 0.05, "<").passed
    assert not check("a", float("nan"), 0.05, "<").passed
    assert check("a", 4.0, 3.5, "in", 4.5).passed
    assert not check("a", 1.0, 0.0, "==").passed


def test_ring_run_writes_a_reproducible_bundle(backend, tmp_path):
    out = tmp_path / "runs"
    report = backend.run_file(str(CONFIGS / "ring_state.yaml"), out=str(out))
    assert report.passed, [c for c in report.checks if not c.passed]
    directory = out / "ring_state"
    for name in ("metrics.json", "summary.md", "summary.html", "phase_m2.bin", "phase_m2.json", "psi_m-1.bin"):
        assert (directory / name).exists(), name
    assert not (directory / "trajectories.csv").exists()
    assert "phase_m1.bin" in report.outputs

    metrics = json.loads((directory / "metrics.json").read_text())
    assert metrics["label"] == "ring_state" and metrics["passed"]
    assert [row["winding"] for row in metrics["metrics"]["rings"]] == [-1, 1, 2]
    assert "<table>" in (directory / "summary.html").read_text()

    first = (directory / "metrics.json").read_bytes()
    backend.run_file(str(CONFIGS / "ring_state.yaml"), out=str(out))
    assert (directory / "metrics.json").read_bytes() == first


def test_failed_configuration_leaves_no_output(backend, tmp_path):
    base = yaml.safe_load((CONFIGS / "ring_state.yaml").read_text())
    bad = dict(base, grid=dict(base["grid"], boundary="box"))
    path = write_config(tmp_path / "bad.yaml", bad)
    results = backend.run_many([path], out=str(tmp_path / "runs"))
    assert results[0]["error"] == "configuration"
    assert not (tmp_path / "runs").exists()
    assert run_scenarios.exit_code(results) == run_scenarios.EXIT_CONFIGURATION


def test_exit_codes():
    passing = ScenarioReport(scenario="ring_state", label="r", seed=1, passed=True, checks=[], metrics={})
    failing = passing.model_copy(update={"passed": False})
    assert run_scenarios.exit_code([{"path": "a", "report": passing}]) == run_scenarios.EXIT_PASS
    assert run_scenarios.exit_code([{"path": "a", "report": failing}]) == run_scenarios.EXIT_CHECK_FAILED
    instability = {"path": "b", "error": "instability", "message": "norm drift"}
    assert run_scenarios.exit_code([{"path": "a", "report": passing}, instability]) == run_scenarios.EXIT_INSTABILITY


def test_summary_and_trajectory_table():
    report = ScenarioReport(
        scenario="free_gaussian", label="free_gaussian", seed=3, passed=False,
        checks=[CheckResult(name="width", value=2e-3, threshold=1e-3, comparison="<", passed=False)],
        metrics={},
    )
    markdown = summary_markdown(report, "Free Gaussian packet")
    assert "**FAIL**" in markdown and "| ✗ | width |" in markdown

    ensemble = Ensemble([0.0, 1.0], [[[0.0], [0.5]], [[1.0], [1.5]], [[2.0], [2.5]]], [[0, 0], [0, 1], [0, 0]])
    table = trajectory_table(ensemble, 2)
    assert list(table.columns) == ["trajectory", "t", "Q_1", "flag"]
    assert len(table) == 4
    assert table["flag"].tolist() == [0, 0, 0, 1]


def test_qtm_state_table_lists_positions_and_velocities(line_grid, tmp_path):
    points = np.linspace(-2.0, 2.0, 120)[:, np.newaxis]
    states = [
        QtmState(line_grid, points, 0.5 * points, 0.0, 0.5, (1.0,)),
        QtmState(line_grid, points + 0.1, 0.5 * points, 0.2, 0.5, (1.0,)),
    ]
    table = qtm_state_table(states, 100)
    assert list(table.columns) == ["id", "t", "q_1", "v_1"]
    assert len(table) == 200
    assert table["t"].tolist()[99:101] == [0.0, 0.2]
    assert table["v_1"].iloc[0] == pytest.approx(-1.0)

    path = write_qtm_states(tmp_path / "qtm_states.csv", states, 10)
    written = pd.read_csv(path)
    assert list(written.columns) == ["id", "t", "q_1", "v_1"]
    assert written["id"].tolist() == list(range(10)) * 2


def test_command_line(monkeypatch, capsys, tmp_path):
    monkeypatch.setenv("PILOTWAVE_STRICT", "0")
    monkeypatch.setattr(sys, "argv", ["run_scenarios.py", "list", "--json"])
    assert run_scenarios.main() == run_scenarios.EXIT_PASS
    listed = json.loads(capsys.readouterr().out)
    assert {"name": "ring_state", "title": "Ring states e^{i m phi}"} in listed

    monkeypatch.setattr(sys, "argv", ["run_scenarios.py", "describe", "nope"])
    assert run_scenarios.main() == run_scenarios.EXIT_CONFIGURATION

    out = tmp_path / "cli"
    monkeypatch.setattr(sys, "argv", ["run_scenarios.py", "run", str(CONFIGS / "ring_state.yaml"),
                                      "--out", str(out), "--seed", "5", "--json"])
    assert run_scenarios.main() == run_scenarios.EXIT_PASS
    payload = json.loads(capsys.readouterr().out)
    assert payload[0]["report"]["seed"] == 5


@pytest.mark.slow
@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.yaml")), ids=lambda p: p.stem)
def test_shipped_scenarios_pass(backend, tmp_path, path):
    report = backend.run_file(str(path), out=str(tmp_path))
    assert report.passed, [c.name for c in report.checks if not c.passed]
