"""
Tests for scenario configs, run archives, replay and the command line.

Runs here use very short horizons and two particles so the whole
pipeline finishes quickly.
"""

import json

import numpy as np
import pytest

from harness.archive import RunArchive, find_runs, first_difference, normalize, run_dir_for
from harness.cli import EXIT_ERROR, EXIT_OK, EXIT_USAGE, main
from harness.config import ScenarioConfig
from harness.experiments import cmd_predict, replay_archive, run_cluster, run_plan, run_predict, run_rng
from simulator.errors import ArchiveError, ConfigError

TINY = {
    "name": "tiny",
    "num_players": 2,
    "dt": 0.1,
    "sim_horizon": 0.3,
    "prediction_horizon": 0.5,
    "radius": 1.5,
    "initial_speed": 0.5,
    "num_particles": 2,
    "solver_max_iterations": 20,
}

TINY_FILE = """\
# tiny scenario
name = tiny
num_players = 2
dt = 0.1
sim_horizon = 0.3
prediction_horizon = 0.5
radius = 1.5
initial_speed = 0.5
num_particles = 2
solver_max_iterations = 20
beta_omega = -1.0, 1.0
"""


def tiny_config(**changes) -> ScenarioConfig:
    return ScenarioConfig(**{**TINY, **changes})


# =============================================================================
# Config
# =============================================================================

def test_load_scenario_file(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY_FILE)
    config = ScenarioConfig.load(path)
    assert config.name == "tiny"
    assert config.num_particles == 2
    assert config.beta_omega == (-1.0, 1.0)
    assert config.sim_steps == 3
    assert config.prediction_steps == 5


def test_state_lists_parse(tmp_path):
    path = tmp_path / "explicit.cfg"
    path.write_text(
        TINY_FILE
        + "initial_states = 0, 0, 0, 1; 1, 1, 3.14, 0\n"
        + "goal_states = 2, 0, 0, 0; -1, -1, 3.14, 0\n"
    )
    config = ScenarioConfig.load(path)
    assert config.initial_state().tolist() == [0, 0, 0, 1, 1, 1, 3.14, 0]
    assert config.goals().shape == (2, 4)


def test_unknown_key_is_rejected(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text(TINY_FILE + "num_robots = 3\n")
    with pytest.raises(ConfigError):
        ScenarioConfig.load(path)


def test_missing_file_is_rejected(tmp_path):
    with pytest.raises(ConfigError):
        ScenarioConfig.load(tmp_path / "absent.cfg")


def test_bad_values_are_rejected():
    with pytest.raises(ConfigError):
        tiny_config(sim_horizon=0.25)
    with pytest.raises(ConfigError):
        tiny_config(robot_index=2)
    with pytest.raises(ConfigError):
        tiny_config(beta_a=(1.0, -1.0))
    with pytest.raises(ConfigError):
        tiny_config(solver_step_size=2.0)
    with pytest.raises(ConfigError):
        ScenarioConfig.from_strings({"num_players": "two"})


def test_config_round_trips_through_json():
    config = tiny_config(start_angles_deg=(0.0, 120.0))
    again = ScenarioConfig.from_dict(json.loads(json.dumps(config.to_dict())))
    assert again == config


def test_default_geometry_faces_center():
    config = tiny_config(radius=3.0)
    x0 = config.initial_state().reshape(2, 4)
    goals = config.goals()
    assert np.allclose(x0[0, :2], [3.0, 0.0])
    assert np.allclose(x0[1, :2], [0.0, 3.0])
    assert np.allclose(goals[:, :2], -x0[:, :2])
    for block in x0:
        heading = np.array([np.cos(block[2]), np.sin(block[2])])
        assert heading @ block[:2] == pytest.approx(-3.0)
    assert np.all(goals[:, 3] == 0.0)


def test_even_spacing_for_more_players():
    config = tiny_config(num_players=3, radius=2.0)
    pos = config.initial_state().reshape(3, 4)[:, :2]
    gaps = [np.linalg.norm(pos[i] - pos[(i + 1) % 3]) for i in range(3)]
    assert np.allclose(gaps, gaps[0])


# =============================================================================
# Archives
# =============================================================================

def test_archive_write_read(tmp_path):
    archive = RunArchive(
        {"command": "plan", "mode": "map-aligned", "run_index": 4, "version": "x"},
        {"seed": 0},
        steps=[{"t": 0, "state": [0.1, 1 / 3]}],
        summary={"costs": [1e-17, 2.5]},
    )
    run_dir = archive.write(run_dir_for(tmp_path, "plan", "map-aligned", 4))
    assert run_dir.name == "run_004"
    again = RunArchive.read(run_dir)
    assert again.steps == archive.steps
    assert again.summary == archive.summary
    assert find_runs(tmp_path) == [run_dir]


def test_incomplete_archive_raises(tmp_path):
    (tmp_path / "config.json").write_text(json.dumps({"meta": {}, "config": {}}))
    with pytest.raises(ArchiveError):
        RunArchive.read(tmp_path)


def test_first_difference_paths():
    assert first_difference({"a": [1, 2]}, {"a": [1, 2]}) is None
    assert first_difference({"a": [1, 2]}, {"a": [1, 3]}) == ".a[1]"
    assert first_difference({"a": 1}, {"a": 1, "b": 2}) == ".b"
    assert first_difference([float("nan")], [float("nan")]) is None


def test_run_streams_are_independent():
    a = run_rng(0, 0, 0).uniform(size=3)
    assert np.array_equal(a, run_rng(0, 0, 0).uniform(size=3))
    assert not np.array_equal(a, run_rng(0, 1, 0).uniform(size=3))
    assert not np.array_equal(a, run_rng(0, 0, 1).uniform(size=3))


# =============================================================================
# Runs and replay
# =============================================================================

def test_plan_run_records_every_step():
    archive = run_plan(tiny_config(), "map-aligned", 0)
    assert "costs" in archive.summary
    assert [s["t"] for s in archive.steps] == [0, 1, 2]
    first = archive.steps[0]
    assert "seeds" in first and "human_seed" in first
    assert np.asarray(first["seeds"]).shape == (2, 2, 2)
    assert sum(first["belief"]["weights"]) == pytest.approx(1.0)
    assert archive.steps == normalize(archive.steps)


def test_plan_replay_reproduces(tmp_path):
    archive = run_plan(tiny_config(), "map-aligned", 0)
    archive.write(tmp_path / "run")
    assert replay_archive(RunArchive.read(tmp_path / "run")) is None


def test_baseline_replay_reproduces():
    archive = normalize_archive(run_plan(tiny_config(), "random-baseline", 1))
    assert replay_archive(archive) is None
    assert len(archive.steps[0]["belief"]["ids"]) == 1


def test_predict_replay_reproduces():
    archive = normalize_archive(run_predict(tiny_config(), "inference", 0))
    assert "error_curve" in archive.summary
    assert len(archive.summary["error_curve"]) == 6
    assert np.asarray(archive.steps[0]["prediction"]).shape == (6, 2, 2)
    assert replay_archive(archive) is None


def test_predict_is_exact_when_observer_and_humans_share_a_seed(tmp_path):
    config = tiny_config(
        beta_omega=(0.3, 0.3), beta_a=(0.2, 0.2),
        solver_convergence_tol=1e-4, solver_max_iterations=300,
    )
    result = cmd_predict(config, 2, "inference", tmp_path, quiet=True)
    assert result["failed"] == 0
    assert np.nanmax(result["mean_sq_error"]) < 1e-3
    curve = np.array(run_predict(config, "inference", 0).summary["error_curve"], dtype=float)
    assert curve[0] == pytest.approx(0.0, abs=1e-12)


def test_replay_reports_tampered_step():
    archive = normalize_archive(run_plan(tiny_config(), "map-aligned", 0))
    archive.steps[1]["belief"]["log_weights"][0] += 1.0
    mismatch = replay_archive(archive)
    assert mismatch["step"] == 1
    assert mismatch["field"].startswith(".belief")


def test_replay_reports_changed_seed_at_first_step():
    archive = normalize_archive(run_plan(tiny_config(), "map-aligned", 0))
    archive.config["seed"] = 1
    mismatch = replay_archive(archive)
    assert mismatch["step"] == 0


def test_cluster_run_partitions_converged_seeds():
    outcome = run_cluster(tiny_config(num_clusters=2), samples=6)
    summary = outcome.archive.summary
    assert len(outcome.archive.steps) == 6
    assert summary["k"] == min(2, summary["converged"])
    assert len(summary["labels"]) == summary["converged"]
    assert sum(outcome.report.sizes()) == summary["converged"]


def normalize_archive(archive: RunArchive) -> RunArchive:
    """The archive as it would be read back from disk."""
    return RunArchive(
        normalize(archive.meta), normalize(archive.config), normalize(archive.steps), normalize(archive.summary)
    )


# =============================================================================
# Command line
# =============================================================================

def test_cli_plan_and_replay(tmp_path, capsys):
    cfg = tmp_path / "tiny.cfg"
    cfg.write_text(TINY_FILE)
    out = tmp_path / "out"
    code = main(["plan", "--config", str(cfg), "--runs", "1", "--out", str(out), "--quiet"])
    assert code == EXIT_OK
    result = json.loads(capsys.readouterr().out)
    assert result["command"] == "plan"
    assert len(result["median_costs"]) == 2
    assert (out / "plan" / "map-aligned" / "costs.csv").is_file()

    assert main(["replay", str(out), "--quiet"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["passed"] is True


def test_cli_usage_errors(tmp_path):
    assert main([]) == EXIT_USAGE
    assert main(["plan"]) == EXIT_USAGE
    assert main(["plan", "--config", "x.cfg", "--mode", "telepathy"]) == EXIT_USAGE
    assert main(["plan", "--config", "x.cfg", "--runs", "0"]) == EXIT_USAGE


def test_cli_library_error(tmp_path, capsys):
    code = main(["plan", "--config", str(tmp_path / "absent.cfg"), "--out", str(tmp_path)])
    assert code == EXIT_ERROR
    error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert error["error"] == "ConfigError"


# =============================================================================
# Archive summaries
# =============================================================================

def test_summaries_recompute_from_archives(tmp_path):
    from analysis.archive_summary import (
        prediction_curve_from_archive,
        summarize_plan_archives,
        summarize_predict_archives,
    )

    config = tiny_config()
    plan = run_plan(config, "map-aligned", 0)
    plan.write(run_dir_for(tmp_path, "plan", "map-aligned", 0))
    predict = run_predict(config, "inference", 0)
    run_dir = predict.write(run_dir_for(tmp_path, "predict", "inference", 0))

    plans = summarize_plan_archives(tmp_path)
    assert plans["map-aligned"]["runs"] == 1
    assert plans["map-aligned"]["median_costs"] == pytest.approx(plan.summary["costs"])

    curve = prediction_curve_from_archive(RunArchive.read(run_dir))
    assert np.allclose(curve, predict.summary["error_curve"], equal_nan=True)
    # offsets past the three simulated steps have no data
    assert summarize_predict_archives(tmp_path)["inference"].runs.tolist() == [1, 1, 1, 1, 0, 0]
