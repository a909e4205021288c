"""
Archive Summary for the planning and prediction experiments.

Recomputes every experiment statistic from run archives alone:
per-player median costs per planning mode, and prediction-error curves
rebuilt from the recorded predictions and visited states.

    python -m analysis.archive_summary out/
"""

import sys
from collections import defaultdict
from typing import Dict, List

import numpy as np

from harness.archive import RunArchive, load_runs
from simulator.state_space import positions

from .prediction import ErrorCurves, aggregate_errors, run_error_curve


def _by_mode(archives: List[RunArchive], command: str) -> Dict[str, List[RunArchive]]:
    grouped = defaultdict(list)
    for archive in archives:
        if archive.command == command:
            grouped[archive.mode].append(archive)
    return dict(sorted(grouped.items()))


def summarize_plan_archives(root) -> Dict[str, Dict]:
    """Per planning mode: run count, failed runs and per-player median total cost."""
    summary = {}
    for mode, runs in _by_mode(load_runs(root), "plan").items():
        costs = np.array([r.summary["costs"] for r in runs if "costs" in r.summary])
        summary[mode] = {
            "runs": len(runs),
            "failed": len(runs) - len(costs),
            "median_costs": np.median(costs, axis=0).tolist() if len(costs) else [],
        }
    return summary


def prediction_curve_from_archive(archive: RunArchive) -> np.ndarray:
    """Per-offset mean prediction error of one predict run, from its records."""
    num_players = int(archive.config["num_players"])
    visited = [positions(np.asarray(s["state"]), num_players) for s in archive.steps]
    visited.append(positions(np.asarray(archive.summary["final_state"]), num_players))
    predictions = [np.asarray(s["prediction"], dtype=float) for s in archive.steps]
    offsets = predictions[0].shape[0]
    return run_error_curve(predictions, np.array(visited), offsets)


def summarize_predict_archives(root) -> Dict[str, ErrorCurves]:
    """Per prediction mode: mean and standard error of the prediction error per offset."""
    summary = {}
    for mode, runs in _by_mode(load_runs(root), "predict").items():
        curves = [prediction_curve_from_archive(r) for r in runs if "final_state" in r.summary]
        if curves:
            summary[mode] = aggregate_errors(curves, float(runs[0].config["dt"]))
    return summary


def print_report(root) -> None:
    print("=" * 70)
    print("PLANNING: MEDIAN TOTAL COST PER PLAYER")
    print("=" * 70)
    for mode, stats in summarize_plan_archives(root).items():
        costs = ", ".join(f"{c:.3f}" for c in stats["median_costs"])
        print(f"  {mode}: {stats['runs']} runs ({stats['failed']} failed)  [{costs}]")

    print("\n" + "=" * 70)
    print("PREDICTION: MEAN SQUARED POSITION ERROR")
    print("=" * 70)
    for mode, curves in summarize_predict_archives(root).items():
        print(f"\n## {mode}")
        for k in range(0, len(curves.offsets), 10):
            print(f"  t+{curves.offsets[k]:4.1f}s  {curves.mean[k]:10.4f} +- {curves.sem[k]:.4f}")


if __name__ == "__main__":
    print_report(sys.argv[1] if len(sys.argv) > 1 else "out")
