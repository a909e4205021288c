"""
Experiment drivers.

Each experiment is a set of independent runs. A run is a pure function of
(config, mode, run index): its random streams are split from the master
seed, so runs can execute in any order or in parallel and still reproduce
bit-identically. Every run is written as a RunArchive; `cmd_replay`
re-simulates an archive and checks it record by record.

    cluster   solve many random seeds and group the equilibria with k-means
    predict   observe humans playing a secret equilibrium and predict ahead
    plan      robot plays the MAP-aligned planner (or the random baseline)
    replay    verify archives against a fresh re-simulation
"""

import logging
import sys
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
from tqdm import tqdm

from analysis.clustering import kmeans_cluster, rotation_handedness, select_k, trajectory_features
from analysis.prediction import aggregate_errors, run_error_curve
from planner.ilq_solver import ilq_solve
from planner.inference import sample_seed_parameters, seed_profile
from planner.map_aligned import HumanTeam, MAPAlignedPlanner, RandomEquilibriumBaseline
from simulator.errors import DivergenceError, LQSolverError, StrategyAlignmentError
from simulator.state_space import control_slice, positions
from simulator.trajectory import Trajectory

from . import __version__
from .archive import (
    RunArchive,
    compare_steps,
    first_difference,
    find_runs,
    normalize,
    run_dir_for,
    write_csv,
)
from .config import ScenarioConfig

logger = logging.getLogger(__name__)

PLAN_MODES = ("map-aligned", "random-baseline")
PREDICT_MODES = ("inference", "random-baseline")
CLUSTER_MODE = "kmeans"

# Random streams split from the master seed
STREAM_PLANNER = 0
STREAM_HUMAN_SEED = 1
STREAM_HUMAN_NOISE = 2
STREAM_CLUSTER = 3


def run_rng(seed: int, run_index: int, stream: int) -> np.random.Generator:
    """Independent generator for one stream of one run."""
    return np.random.default_rng(np.random.SeedSequence([seed, run_index, stream]))


def _progress(iterable, total: int, desc: str, quiet: bool):
    return tqdm(iterable, total=total, desc=desc, disable=quiet or not sys.stderr.isatty())


def _meta(command: str, mode: str, run_index: int, **extra) -> Dict[str, Any]:
    return {"command": command, "mode": mode, "run_index": run_index, "version": __version__, **extra}


def _error_summary(err: Exception) -> Dict[str, Any]:
    return {"error": type(err).__name__, "message": str(err)}


def _make_planner(config: ScenarioConfig, mode: str, game, threads: int, observer: bool) -> MAPAlignedPlanner:
    if mode in ("map-aligned", "inference"):
        return MAPAlignedPlanner(
            game,
            config.seed_distribution(),
            num_particles=config.num_particles,
            observation_noise=config.observation_noise,
            merge_tol=config.merge_tol,
            settings=config.solver_settings(),
            robot_index=config.robot_index,
            threads=threads,
            observer=observer,
        )
    if mode == "random-baseline":
        return RandomEquilibriumBaseline(
            game,
            config.seed_distribution(),
            settings=config.solver_settings(),
            robot_index=config.robot_index,
            observer=observer,
        )
    raise ValueError(f"unknown mode {mode!r}")


def _belief_record(planner: MAPAlignedPlanner, config: ScenarioConfig) -> Dict[str, Any]:
    best = planner.map_particle()
    record = {"belief": planner.belief.snapshot(), "map_id": best.id}
    if best.last_result is not None:
        record["map_plan"] = best.last_result.trajectory.positions().tolist()
    if config.archive_trajectories == "all":
        record["plans"] = {
            str(p.id): p.last_result.trajectory.positions().tolist()
            for p in planner.belief.particles
            if p.last_result is not None
        }
    return record


# =============================================================================
# Single runs
# =============================================================================

def run_plan(config: ScenarioConfig, mode: str, run_index: int, threads: int = 1) -> RunArchive:
    """
    Closed-loop run: the robot plans with `mode`, humans replan at their secret equilibrium.
    """
    if mode not in PLAN_MODES:
        raise ValueError(f"plan mode must be one of {PLAN_MODES}, got {mode!r}")
    archive = RunArchive(_meta("plan", mode, run_index), config.to_dict())
    game = config.build_game()
    settings = config.solver_settings()
    dt = config.dt
    robot = control_slice(config.robot_index)

    x = config.initial_state()
    states, controls = [x], []
    planner = _make_planner(config, mode, game, threads, observer=False)
    humans = HumanTeam(
        game, config.human_indices, settings, config.human_noise_std,
        rng=run_rng(config.seed, run_index, STREAM_HUMAN_NOISE),
    )
    try:
        with planner:
            humans.initialize(x, config.seed_distribution(), run_rng(config.seed, run_index, STREAM_HUMAN_SEED))
            u_robot = planner.initialize(x, run_rng(config.seed, run_index, STREAM_PLANNER))
            for t in range(config.sim_steps):
                u = humans.act(t, x)
                u[robot] = u_robot
                x_next = game.dynamics.integrate(x, u, dt)

                record = {"t": t, "state": x.tolist(), "control": u.tolist()}
                if t == 0:
                    record["seeds"] = planner.seed_parameters.tolist()
                    record["human_seed"] = humans.secret_parameters.tolist()
                record.update(_belief_record(planner, config))
                archive.steps.append(normalize(record))

                controls.append(u)
                states.append(x_next)
                if t + 1 < config.sim_steps:
                    u_robot = planner.step(x_next, x, u_robot)
                x = x_next
    except StrategyAlignmentError as err:
        logger.warning("plan run %d (%s) failed: %s", run_index, mode, err)
        archive.summary = normalize(_error_summary(err))
        return archive

    trajectory = Trajectory(np.array(states), np.array(controls), dt)
    archive.summary = normalize({
        "costs": game.evaluate_costs(trajectory).tolist(),
        "final_state": x.tolist(),
        "steps": config.sim_steps,
    })
    return archive


def run_predict(config: ScenarioConfig, mode: str, run_index: int, threads: int = 1) -> RunArchive:
    """
    Observation run: every player is a human; the planner only predicts T_p ahead.
    """
    if mode not in PREDICT_MODES:
        raise ValueError(f"predict mode must be one of {PREDICT_MODES}, got {mode!r}")
    archive = RunArchive(_meta("predict", mode, run_index), config.to_dict())
    game = config.build_game()
    settings = config.solver_settings()
    dt = config.dt

    x = config.initial_state()
    observer = _make_planner(config, mode, game, threads, observer=True)
    humans = HumanTeam(
        game, range(config.num_players), settings, config.human_noise_std,
        rng=run_rng(config.seed, run_index, STREAM_HUMAN_NOISE),
    )
    predictions: List[np.ndarray] = []
    visited = [positions(x, config.num_players)]
    try:
        with observer:
            humans.initialize(x, config.seed_distribution(), run_rng(config.seed, run_index, STREAM_HUMAN_SEED))
            observer.initialize(x, run_rng(config.seed, run_index, STREAM_PLANNER))
            for t in range(config.sim_steps):
                predicted = observer.predict(x, config.prediction_steps).positions()
                u = humans.act(t, x)
                x_next = game.dynamics.integrate(x, u, dt)

                record = {"t": t, "state": x.tolist(), "control": u.tolist(), "prediction": predicted.tolist()}
                if t == 0:
                    record["seeds"] = observer.seed_parameters.tolist()
                    record["human_seed"] = humans.secret_parameters.tolist()
                record.update(_belief_record(observer, config))
                record.pop("map_plan", None)
                archive.steps.append(normalize(record))

                predictions.append(predicted)
                visited.append(positions(x_next, config.num_players))
                if t + 1 < config.sim_steps:
                    observer.step(x_next, x, None)
                x = x_next
    except StrategyAlignmentError as err:
        logger.warning("predict run %d (%s) failed: %s", run_index, mode, err)
        archive.summary = normalize(_error_summary(err))
        return archive

    curve = run_error_curve(predictions, np.array(visited), config.prediction_steps + 1)
    archive.summary = normalize({
        "error_curve": curve.tolist(),
        "final_state": x.tolist(),
        "steps": config.sim_steps,
    })
    return archive


@dataclass
class ClusterOutcome:
    """Cluster run archive plus the report built from it."""

    archive: RunArchive
    report: Any = None
    trajectories: List[Trajectory] = field(default_factory=list)


def _solve_seed(args) -> Dict[str, Any]:
    game, x0, betas, settings, index = args
    record = {"index": index, "betas": betas.tolist()}
    try:
        result = ilq_solve(game, x0, seed_profile(betas, game.horizon_steps, game.dt), settings)
    except (DivergenceError, LQSolverError) as err:
        record.update({"converged": False, "error": type(err).__name__})
        return record
    record.update({
        "converged": result.converged,
        "iterations": result.iterations,
        "costs": result.costs.tolist(),
        "states": result.trajectory.states.tolist(),
        "controls": result.trajectory.controls.tolist(),
    })
    return record


def run_cluster(config: ScenarioConfig, samples: int, run_index: int = 0, threads: int = 1, quiet: bool = True) -> ClusterOutcome:
    """
    Solve `samples` random seeds from the initial state and cluster the converged ones.

    Raises:
        StrategyAlignmentError: if no seed converged
    """
    archive = RunArchive(_meta("cluster", CLUSTER_MODE, run_index, samples=samples), config.to_dict())
    game = config.build_game()
    x0 = config.initial_state()
    settings = config.solver_settings()
    betas = sample_seed_parameters(
        config.seed_distribution(), samples, config.num_players,
        run_rng(config.seed, run_index, STREAM_CLUSTER),
    )
    jobs = [(game, x0, b, settings, i) for i, b in enumerate(betas)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(_progress(pool.map(_solve_seed, jobs), samples, "seeds", quiet))
    else:
        records = [_solve_seed(job) for job in _progress(jobs, samples, "seeds", quiet)]
    archive.steps = [normalize(r) for r in records]

    converged = [r for r in archive.steps if r["converged"]]
    if not converged:
        raise StrategyAlignmentError(f"none of {samples} seeds converged")
    trajectories = [Trajectory(r["states"], r["controls"], config.dt) for r in converged]
    costs = np.array([r["costs"] for r in converged])
    features = trajectory_features(trajectories)

    k = config.num_clusters or select_k(features, config.k_max, config.seed)
    k = min(k, len(converged))
    report = kmeans_cluster(features, k, config.seed, costs=costs, trajectories=trajectories)
    logger.info("%d of %d seeds converged, %d clusters", len(converged), samples, k)

    archive.summary = normalize({
        "converged": len(converged),
        "k": k,
        "sample_index": [r["index"] for r in converged],
        "labels": report.labels.tolist(),
        "representatives": [converged[r]["index"] for r in report.representatives],
        "mean_costs": report.mean_costs.tolist(),
        "handedness": [rotation_handedness(t) for t in report.trajectories],
    })
    return ClusterOutcome(archive, report, trajectories)


# =============================================================================
# Commands
# =============================================================================

def _plan_job(args) -> RunArchive:
    config, mode, index, threads = args
    return run_plan(config, mode, index, threads)


def _predict_job(args) -> RunArchive:
    config, mode, index, threads = args
    return run_predict(config, mode, index, threads)


def _run_all(job, config, mode, runs: int, threads: int, quiet: bool, desc: str) -> List[RunArchive]:
    """
    Runs in parallel processes when threads > 1; results come back in run order.
    A single run uses the threads for its particles instead.
    """
    inner = threads if runs == 1 else 1
    jobs = [(config, mode, i, inner) for i in range(runs)]
    if threads > 1 and runs > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(_progress(pool.map(job, jobs), runs, desc, quiet))
    return [job(j) for j in _progress(jobs, runs, desc, quiet)]


def cmd_plan(config: ScenarioConfig, runs: int, mode: str, out_dir, threads: int = 1, quiet: bool = False) -> Dict[str, Any]:
    """Closed-loop planning runs; writes archives and costs.csv, returns per-player medians."""
    logger.info("plan: %s, %d runs, mode %s", config.name, runs, mode)
    archives = _run_all(_plan_job, config, mode, runs, threads, quiet, f"plan/{mode}")
    for archive in archives:
        archive.write(run_dir_for(out_dir, "plan", mode, archive.run_index))

    ok = [a for a in archives if "costs" in a.summary]
    header = ["run"] + [f"cost_{i}" for i in range(config.num_players)]
    csv_path = write_csv(
        Path(out_dir) / "plan" / mode / "costs.csv", header,
        ([a.run_index] + a.summary["costs"] for a in ok),
    )
    medians = np.median([a.summary["costs"] for a in ok], axis=0).tolist() if ok else []
    logger.info("plan: wrote %s", csv_path)
    return {"command": "plan", "mode": mode, "runs": runs, "failed": runs - len(ok), "median_costs": medians}


def cmd_predict(config: ScenarioConfig, runs: int, mode: str, out_dir, threads: int = 1, quiet: bool = False) -> Dict[str, Any]:
    """Prediction runs; writes archives and prediction_error.csv, returns the error curves."""
    logger.info("predict: %s, %d runs, mode %s", config.name, runs, mode)
    archives = _run_all(_predict_job, config, mode, runs, threads, quiet, f"predict/{mode}")
    for archive in archives:
        archive.write(run_dir_for(out_dir, "predict", mode, archive.run_index))

    curves = [np.array(a.summary["error_curve"], dtype=float) for a in archives if "error_curve" in a.summary]
    result = {"command": "predict", "mode": mode, "runs": runs, "failed": runs - len(curves)}
    if curves:
        errors = aggregate_errors(curves, config.dt)
        csv_path = errors.to_csv(Path(out_dir) / "predict" / mode / "prediction_error.csv")
        logger.info("predict: wrote %s", csv_path)
        result.update({"mean_sq_error": errors.mean.tolist(), "sem": errors.sem.tolist()})
    return result


def cmd_cluster(config: ScenarioConfig, samples: int, out_dir, threads: int = 1, quiet: bool = False) -> Dict[str, Any]:
    """Equilibrium enumeration; writes the archive plus clusters.csv / clusters.json."""
    logger.info("cluster: %s, %d samples", config.name, samples)
    outcome = run_cluster(config, samples, 0, threads, quiet)
    run_dir = outcome.archive.write(run_dir_for(out_dir, "cluster", CLUSTER_MODE, 0))
    outcome.report.to_csv(run_dir.parent / "clusters.csv")
    outcome.report.to_json(run_dir.parent / "clusters.json")
    return {
        "command": "cluster",
        "samples": samples,
        "converged": outcome.archive.summary["converged"],
        "k": outcome.report.k,
        "sizes": outcome.report.sizes(),
        "mean_costs": outcome.report.mean_costs.tolist(),
    }


# =============================================================================
# Replay
# =============================================================================

@dataclass
class ReplayReport:
    """
    Outcome of re-simulating archives.

    Attributes:
        checked: run directories re-simulated
        mismatches: one entry per failing run: run directory, step and field
    """

    checked: List[str] = field(default_factory=list)
    mismatches: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.checked) and not self.mismatches

    def to_dict(self) -> Dict[str, Any]:
        return {"passed": self.passed, "checked": self.checked, "mismatches": self.mismatches}


def resimulate(archive: RunArchive) -> RunArchive:
    """Fresh archive of the run described by `archive`'s config echo."""
    config = ScenarioConfig.from_dict(archive.config)
    command = archive.command
    if command == "plan":
        return run_plan(config, archive.mode, archive.run_index)
    if command == "predict":
        return run_predict(config, archive.mode, archive.run_index)
    if command == "cluster":
        return run_cluster(config, int(archive.meta["samples"]), archive.run_index).archive
    raise ValueError(f"cannot replay command {command!r}")


def replay_archive(archive: RunArchive) -> Optional[Dict[str, Any]]:
    """None if the archive reproduces, else where it first differs."""
    if archive.meta.get("version") != __version__:
        logger.warning("archive written by version %s, replaying with %s", archive.meta.get("version"), __version__)
    fresh = resimulate(archive)
    found = compare_steps(archive.steps, fresh.steps)
    if found is not None:
        step, path = found
        return {"step": step, "field": path}
    path = first_difference(archive.summary, normalize(fresh.summary))
    if path is not None:
        return {"step": None, "field": f"summary{path}"}
    return None


def cmd_replay(path, quiet: bool = False) -> ReplayReport:
    """Re-simulate every run archive at or below `path`."""
    report = ReplayReport()
    run_dirs = find_runs(path)
    for run_dir in _progress(run_dirs, len(run_dirs), "replay", quiet):
        mismatch = replay_archive(RunArchive.read(run_dir))
        report.checked.append(str(run_dir))
        if mismatch is not None:
            mismatch["run"] = str(run_dir)
            logger.warning("replay mismatch in %s at step %s, field %s", run_dir, mismatch["step"], mismatch["field"])
            report.mismatches.append(mismatch)
    return report
